// driftforge command-line front end: run, suite, synth, verify-theory.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "driftforge/driftforge.hpp"

namespace df = driftforge;

namespace {

struct RunArgs {
    std::string data;
    bool no_header = false;
    std::string synthetic_spec;
    int lookback = 60;
    int horizon = 24;
    std::string method = "d3a";
    std::string protocol = "standard";
    std::string model = "linear";
    std::size_t lw = 16;
    std::size_t mt = 1024;
    double alpha_t = 0.01;
    double lambda = -1.0;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string out_dir;
};

df::ExperimentConfig to_config(const RunArgs& a) {
    if (a.data.empty() == a.synthetic_spec.empty())
        throw df::ConfigError("exactly one of --data and --synthetic-spec is required");
    df::ExperimentConfig c;
    if (!a.data.empty()) {
        c.csv_path = a.data;
        c.csv_has_header = !a.no_header;
    } else {
        c.synthetic = df::load_synthetic_spec(a.synthetic_spec);
    }
    c.lookback = a.lookback;
    c.horizon = a.horizon;
    c.method = df::method_from_string(a.method);
    c.protocol = df::protocol_from_string(a.protocol);
    c.model = df::model_kind_from_string(a.model);
    c.detector.window = a.lw;
    c.detector.reset_period = a.mt;
    c.detector.alpha_t = a.alpha_t;
    if (a.lambda >= 0.0) c.lambda = a.lambda;
    c.lr = a.lr;
    c.seed = a.seed;
    c.out_dir = a.out_dir;
    c.validate();
    return c;
}

void print_summary(const df::ReportRecord& r) {
    std::cout << "method=" << r.method << " protocol=" << r.protocol << " rounds=" << r.n_rounds
              << " mse=" << r.accumulated_mse << " mae=" << r.accumulated_mae << " alarms=" << r.alarms.size()
              << " refreshes=" << r.scheduled_refreshes.size() << " updates=" << r.training_updates << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftforge: online forecasting with drift detection and adaptation"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(34);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run one online experiment");
    run->add_option("--data", ra.data, "CSV input (one column per channel)");
    run->add_flag("--no-header", ra.no_header, "CSV has no header row");
    run->add_option("--synthetic-spec", ra.synthetic_spec, "Synthetic stream spec (JSON)");
    run->add_option("--lookback", ra.lookback, "Look-back length L")->capture_default_str();
    run->add_option("--horizon", ra.horizon, "Forecast horizon H")->capture_default_str();
    run->add_option("--method", ra.method, "naive | d3a | d3a-star")->capture_default_str();
    run->add_option("--protocol", ra.protocol, "standard | delayed")->capture_default_str();
    run->add_option("--model", ra.model, "linear | mlp")->capture_default_str();
    run->add_option("--lw", ra.lw, "Detector window l_w (also recent-bank size)")->capture_default_str();
    run->add_option("--mt", ra.mt, "Scheduled refresh period m_t")->capture_default_str();
    run->add_option("--alpha-t", ra.alpha_t, "Detector significance level")->capture_default_str();
    run->add_option("--lambda", ra.lambda, "Augmentation weight (negative: 2.0 if M >= 20 else 0.1)")
        ->capture_default_str();
    run->add_option("--lr", ra.lr, "Online learning rate")->capture_default_str();
    run->add_option("--seed", ra.seed, "Seed")->capture_default_str();
    run->add_option("--out-dir", ra.out_dir, "Directory for report.json, trace.csv, verdicts.jsonl, model.ckpt");

    std::string suite_config;
    std::string suite_out;
    auto* suite = app.add_subcommand("suite", "Run a grid of experiments");
    suite->add_option("--config", suite_config, "Grid file (JSON)")->required()->check(CLI::ExistingFile);
    suite->add_option("--out", suite_out, "Write rows CSV here (summary goes next to it)");

    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 0;
    bool synth_builtin = false;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic stream as CSV");
    synth->add_option("--spec", synth_spec, "Synthetic stream spec (JSON)");
    synth->add_flag("--three-regime", synth_builtin, "Use the built-in 3-regime stream");
    synth->add_option("--seed", synth_seed, "Seed added to the spec seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output CSV")->required();

    int th_dim = 50;
    long th_trials = 1000;
    std::uint64_t th_seed = 0;
    std::string th_out;
    auto* theory = app.add_subcommand("verify-theory", "Check the linear-case bounds on random instances");
    theory->add_option("--dim", th_dim, "Maximum dimension")->capture_default_str()->check(CLI::Range(1, 500));
    theory->add_option("--trials", th_trials, "Instances per check")->capture_default_str()->check(
        CLI::PositiveNumber);
    theory->add_option("--seed", th_seed, "Seed")->capture_default_str();
    theory->add_option("--out", th_out, "Write the JSON report here (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = to_config(ra);
            const auto res = df::run_experiment(cfg);
            print_summary(res.report);
        } else if (*suite) {
            std::ifstream in(suite_config);
            const auto grid = nlohmann::json::parse(in);
            const auto [configs, parallelism] = df::expand_grid(grid);
            for (const auto& c : configs) c.validate();
            const auto rows = df::run_suite(configs, parallelism);
            const auto summary = df::summarize(rows);
            if (suite_out.empty()) {
                df::write_suite_rows(std::cout, rows);
                std::cout << '\n';
                df::write_suite_summary(std::cout, summary);
            } else {
                const std::filesystem::path p(suite_out);
                if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
                std::ofstream rows_out(p);
                df::write_suite_rows(rows_out, rows);
                std::ofstream sum_out(p.parent_path() / (p.stem().string() + "_summary.csv"));
                df::write_suite_summary(sum_out, summary);
            }
            for (const auto& r : rows)
                if (!r.ok) {
                    std::cerr << "run failed (" << r.method << ", " << r.protocol << ", h=" << r.horizon
                              << ", seed=" << r.seed << "): " << r.error << '\n';
                    return 1;
                }
        } else if (*synth) {
            if (synth_builtin == !synth_spec.empty()) throw df::ConfigError("give exactly one of --spec and --three-regime");
            auto spec = synth_builtin ? df::three_regime_stream(0) : df::load_synthetic_spec(synth_spec);
            spec.seed += synth_seed;
            df::save_csv(df::generate_synthetic(spec), synth_out);
        } else if (*theory) {
            const auto report = df::theory::theory_report(th_trials, th_dim, th_seed);
            if (th_out.empty()) {
                std::cout << report.dump(2) << '\n';
            } else {
                std::ofstream out(th_out);
                if (!out) throw std::runtime_error("cannot write " + th_out);
                out << report.dump(2) << '\n';
            }
        }
    } catch (const df::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

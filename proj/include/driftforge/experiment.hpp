#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftforge/adapter.hpp"
#include "driftforge/detector.hpp"
#include "driftforge/error.hpp"
#include "driftforge/forecaster.hpp"
#include "driftforge/protocol.hpp"
#include "driftforge/series.hpp"
#include "driftforge/synthetic.hpp"

namespace driftforge {

inline constexpr int kReportSchemaVersion = 1;

enum class Method { Naive, D3A, D3AStar };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Naive:
            return "naive";
        case Method::D3A:
            return "d3a";
        default:
            return "d3a-star";
    }
}

inline Method method_from_string(const std::string& s) {
    if (s == "naive") return Method::Naive;
    if (s == "d3a") return Method::D3A;
    if (s == "d3a-star") return Method::D3AStar;
    throw ConfigError("unknown method '" + s + "' (expected naive|d3a|d3a-star)");
}

struct ExperimentConfig {
    std::optional<std::string> csv_path;
    bool csv_has_header = true;
    std::optional<SyntheticSpec> synthetic;  // generated with seed spec.seed + seed

    int lookback = 60;
    int horizon = 24;
    double warm_fraction = 0.25;
    ProtocolMode protocol = ProtocolMode::Standard;
    Method method = Method::D3A;

    ModelKind model = ModelKind::Linear;
    int hidden_width = 64;
    double lr = 1e-3;
    double weight_decay = 0.0;
    bool pretrain = true;

    DetectorConfig detector;
    AdaptConfig adapt;              // lambda and mode are filled in per run
    std::optional<double> lambda;  // unset: select_lambda(M)
    std::size_t prev_capacity = 512;  // l_v

    std::uint64_t seed = 0;
    std::string out_dir;  // empty: nothing written

    void validate() const {
        if (csv_path.has_value() == synthetic.has_value())
            throw ConfigError("exactly one of a csv path or a synthetic spec is required");
        if (lookback < 1 || horizon < 1) throw ConfigError("lookback and horizon must be positive");
        if (!(warm_fraction > 0.0 && warm_fraction < 1.0)) throw ConfigError("warm_fraction must lie in (0, 1)");
        if (model == ModelKind::Mlp && hidden_width < 1) throw ConfigError("hidden_width must be positive");
        if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
        if (lambda && !(*lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
        if (prev_capacity < 1) throw ConfigError("prev_capacity must be positive");
        detector.validate();
        AdaptConfig a = adapt;
        a.lambda = lambda.value_or(0.0);
        a.validate();
        if (synthetic) validate_spec(*synthetic, long{lookback} + horizon);
    }

  private:
    static void validate_spec(const SyntheticSpec& s, long min_len) { driftforge::validate(s, min_len); }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{
        {"lookback", c.lookback},
        {"horizon", c.horizon},
        {"warm_fraction", c.warm_fraction},
        {"protocol", to_string(c.protocol)},
        {"method", to_string(c.method)},
        {"model", to_string(c.model)},
        {"hidden_width", c.hidden_width},
        {"lr", c.lr},
        {"weight_decay", c.weight_decay},
        {"pretrain", c.pretrain},
        {"detector",
         {{"window", c.detector.window}, {"alpha_t", c.detector.alpha_t}, {"reset_period", c.detector.reset_period}}},
        {"adapt",
         {{"max_epochs", c.adapt.max_epochs},
          {"steps_per_epoch", c.adapt.steps_per_epoch},
          {"batch_size", c.adapt.batch_size},
          {"lr_init", c.adapt.lr_init},
          {"plateau_decay_factor", c.adapt.plateau_decay_factor},
          {"lr_min", c.adapt.lr_min}}},
        {"lambda", c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr)},
        {"prev_capacity", c.prev_capacity},
        {"seed", c.seed},
        {"out_dir", c.out_dir},
    };
    if (c.csv_path) j["data"] = {{"csv", *c.csv_path}, {"has_header", c.csv_has_header}};
    if (c.synthetic) j["data"] = {{"synthetic", *c.synthetic}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = ExperimentConfig{};
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.contains("csv")) {
            c.csv_path = d.at("csv").get<std::string>();
            c.csv_has_header = d.value("has_header", true);
        }
        if (d.contains("synthetic")) c.synthetic = d.at("synthetic").get<SyntheticSpec>();
    }
    c.lookback = j.value("lookback", c.lookback);
    c.horizon = j.value("horizon", c.horizon);
    c.warm_fraction = j.value("warm_fraction", c.warm_fraction);
    if (j.contains("protocol")) c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.pretrain = j.value("pretrain", c.pretrain);
    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        c.detector.window = d.value("window", c.detector.window);
        c.detector.alpha_t = d.value("alpha_t", c.detector.alpha_t);
        c.detector.reset_period = d.value("reset_period", c.detector.reset_period);
    }
    if (j.contains("adapt")) {
        const auto& a = j.at("adapt");
        c.adapt.max_epochs = a.value("max_epochs", c.adapt.max_epochs);
        c.adapt.steps_per_epoch = a.value("steps_per_epoch", c.adapt.steps_per_epoch);
        c.adapt.batch_size = a.value("batch_size", c.adapt.batch_size);
        c.adapt.lr_init = a.value("lr_init", c.adapt.lr_init);
        c.adapt.plateau_decay_factor = a.value("plateau_decay_factor", c.adapt.plateau_decay_factor);
        c.adapt.lr_min = a.value("lr_min", c.adapt.lr_min);
    }
    if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
    c.prev_capacity = j.value("prev_capacity", c.prev_capacity);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
}

struct AdaptationEvent {
    long event_round = 0;
    std::string trigger;  // alarm | scheduled
    int epochs = 0;
    std::vector<double> lr_path;
    double pre_loss = 0.0;
    double post_loss = 0.0;
    bool aborted = false;
    long gradient_entries = 0;
    double wall_seconds = 0.0;

    bool operator==(const AdaptationEvent&) const = default;
};

struct Alarm {
    long round = 0;
    double z = 0.0;
    bool operator==(const Alarm&) const = default;
};

struct ReportRecord {
    int schema_version = kReportSchemaVersion;
    std::string method;
    std::string protocol;
    double accumulated_mse = 0.0;
    double accumulated_mae = 0.0;
    long n_rounds = 0;       // rounds scored
    long issued_rounds = 0;  // rounds forecast
    long unrevealed_rounds = 0;
    long training_updates = 0;
    std::vector<Alarm> alarms;
    std::vector<long> scheduled_refreshes;
    std::vector<AdaptationEvent> adaptation_events;
    double wall_time = 0.0;
    nlohmann::json config;
    std::uint64_t seed = 0;

    bool operator==(const ReportRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const AdaptationEvent& e) {
    j = {{"event_round", e.event_round}, {"trigger", e.trigger},     {"epochs", e.epochs},
         {"lr_path", e.lr_path},         {"pre_loss", e.pre_loss},   {"post_loss", e.post_loss},
         {"aborted", e.aborted},         {"gradient_entries", e.gradient_entries}, {"wall_seconds", e.wall_seconds}};
}

inline void from_json(const nlohmann::json& j, AdaptationEvent& e) {
    j.at("event_round").get_to(e.event_round);
    j.at("trigger").get_to(e.trigger);
    j.at("epochs").get_to(e.epochs);
    j.at("lr_path").get_to(e.lr_path);
    j.at("pre_loss").get_to(e.pre_loss);
    j.at("post_loss").get_to(e.post_loss);
    j.at("aborted").get_to(e.aborted);
    j.at("gradient_entries").get_to(e.gradient_entries);
    j.at("wall_seconds").get_to(e.wall_seconds);
}

inline void to_json(nlohmann::json& j, const ReportRecord& r) {
    nlohmann::json alarms = nlohmann::json::array();
    for (const auto& a : r.alarms) alarms.push_back({{"round", a.round}, {"z", a.z}});
    j = {{"schema_version", r.schema_version},
         {"method", r.method},
         {"protocol", r.protocol},
         {"accumulated_mse", r.accumulated_mse},
         {"accumulated_mae", r.accumulated_mae},
         {"n_rounds", r.n_rounds},
         {"issued_rounds", r.issued_rounds},
         {"unrevealed_rounds", r.unrevealed_rounds},
         {"training_updates", r.training_updates},
         {"alarms", alarms},
         {"scheduled_refreshes", r.scheduled_refreshes},
         {"adaptation_events", r.adaptation_events},
         {"wall_time", r.wall_time},
         {"config", r.config},
         {"seed", r.seed}};
}

inline void from_json(const nlohmann::json& j, ReportRecord& r) {
    j.at("schema_version").get_to(r.schema_version);
    if (r.schema_version != kReportSchemaVersion)
        throw ConfigError("unsupported report schema_version " + std::to_string(r.schema_version));
    j.at("method").get_to(r.method);
    j.at("protocol").get_to(r.protocol);
    j.at("accumulated_mse").get_to(r.accumulated_mse);
    j.at("accumulated_mae").get_to(r.accumulated_mae);
    j.at("n_rounds").get_to(r.n_rounds);
    j.at("issued_rounds").get_to(r.issued_rounds);
    j.at("unrevealed_rounds").get_to(r.unrevealed_rounds);
    j.at("training_updates").get_to(r.training_updates);
    r.alarms.clear();
    for (const auto& a : j.at("alarms")) r.alarms.push_back({a.at("round").get<long>(), a.at("z").get<double>()});
    j.at("scheduled_refreshes").get_to(r.scheduled_refreshes);
    j.at("adaptation_events").get_to(r.adaptation_events);
    j.at("wall_time").get_to(r.wall_time);
    r.config = j.at("config");
    j.at("seed").get_to(r.seed);
}

struct TraceRow {
    long round = 0;
    double mse = 0.0;
    double mae = 0.0;
    double cumulative_mean_mse = 0.0;
    double cumulative_mean_mae = 0.0;
    VerdictKind verdict = VerdictKind::NoDrift;

    bool operator==(const TraceRow&) const = default;
};

using LossTrace = std::vector<TraceRow>;

inline constexpr const char* kTraceHeader = "round,mse,mae,cumulative_mean_mse,cumulative_mean_mae,verdict";

/// Arithmetic means of the per-round mse and mae columns.
inline std::pair<double, double> accumulate(const LossTrace& trace) {
    if (trace.empty()) throw ConfigError("cannot accumulate an empty trace");
    double mse = 0.0, mae = 0.0;
    for (const auto& r : trace) {
        mse += r.mse;
        mae += r.mae;
    }
    const double n = static_cast<double>(trace.size());
    return {mse / n, mae / n};
}

struct RunResult {
    ReportRecord report;
    LossTrace trace;
    std::vector<Verdict> verdicts;
    Forecaster model;
};

namespace detail {

inline void write_number(std::ostream& out, double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, r.ptr - buf);
}

inline double read_number(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ParseError(line, "bad number '" + std::string(s) + "'");
    return v;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace detail

inline void write_trace(std::ostream& out, const LossTrace& trace) {
    out << kTraceHeader << '\n';
    for (const auto& r : trace) {
        out << r.round << ',';
        detail::write_number(out, r.mse);
        out << ',';
        detail::write_number(out, r.mae);
        out << ',';
        detail::write_number(out, r.cumulative_mean_mse);
        out << ',';
        detail::write_number(out, r.cumulative_mean_mae);
        out << ',' << to_string(r.verdict) << '\n';
    }
}

inline LossTrace read_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kTraceHeader) throw ParseError(1, "bad trace header");
    LossTrace trace;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(detail::trim(line));
        if (cells.size() != 6) throw ParseError(line_no, "expected 6 trace columns");
        TraceRow r;
        r.round = static_cast<long>(detail::read_number(cells[0], line_no));
        r.mse = detail::read_number(cells[1], line_no);
        r.mae = detail::read_number(cells[2], line_no);
        r.cumulative_mean_mse = detail::read_number(cells[3], line_no);
        r.cumulative_mean_mae = detail::read_number(cells[4], line_no);
        r.verdict = verdict_kind_from_string(std::string(cells[5]));
        trace.push_back(r);
    }
    return trace;
}

inline void emit_trace(const LossTrace& trace, const std::string& path) {
    auto out = detail::open_out(path);
    write_trace(out, trace);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline LossTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace " + path);
    return read_trace(in);
}

inline void emit_report(const ReportRecord& r, const std::string& path) {
    auto out = detail::open_out(path);
    out << nlohmann::json(r).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline ReportRecord load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open report " + path);
    nlohmann::json j;
    in >> j;
    return j.get<ReportRecord>();
}

inline void emit_verdicts(const std::vector<Verdict>& verdicts, const std::string& path) {
    auto out = detail::open_out(path);
    for (const auto& v : verdicts) out << to_json_line(v).dump() << '\n';
}

/// The series an experiment runs on, before normalization.
inline MultivariateSeries load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.csv_path) return load_csv(*cfg.csv_path, cfg.csv_has_header);
    SyntheticSpec spec = *cfg.synthetic;
    spec.seed += cfg.seed;
    return generate_synthetic(spec);
}

namespace detail {

struct Pending {
    WindowPair pair;
    Eigen::MatrixXd forecast;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Runs one online experiment.
///
/// Warm-up: fit the normalizer on the warm split and (optionally) make one pass of
/// single-example updates over its windows. Online, per round: forecast, let the protocol
/// reveal targets, take one update per training pair, then for every scored pair record
/// metrics, push it into the recent bank (evictions flow into the older bank), feed the
/// loss to the detector and check it. On an alarm or scheduled refresh the model is re-tuned
/// on the recent bank plus noise-augmented older pairs and the detector is reset. The naive
/// method skips detection entirely.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const auto raw = load_experiment_data(cfg);
    raw.validate();
    const Eigen::Index L = cfg.lookback, H = cfg.horizon;
    const auto [warm_raw, online_raw] = split_warmup(raw, cfg.warm_fraction, L + H);
    const auto norm = Normalizer::fit(warm_raw);
    const auto warm = norm.apply(warm_raw);
    const auto online = norm.apply(online_raw);

    ForecasterSpec fspec;
    fspec.kind = cfg.model;
    fspec.hidden_width = cfg.hidden_width;
    fspec.channels = static_cast<int>(raw.channels());
    fspec.lookback = cfg.lookback;
    fspec.horizon = cfg.horizon;
    fspec.init_seed = cfg.seed;

    RunResult out;
    out.model = Forecaster::init(fspec);
    Forecaster& model = out.model;
    AdamState adam = AdamState::zeros(fspec.param_count(), cfg.lr, cfg.weight_decay);

    ReportRecord& rep = out.report;
    rep.method = to_string(cfg.method);
    rep.protocol = to_string(cfg.protocol);
    rep.config = cfg;
    rep.seed = cfg.seed;

    const double lambda = select_lambda(fspec.channels, cfg.lambda);
    AdaptConfig acfg = cfg.adapt;
    acfg.lambda = lambda;
    acfg.mode = cfg.method == Method::D3AStar ? AdaptMode::RegressorOnly : AdaptMode::Full;
    acfg.weight_decay = cfg.weight_decay;

    auto flush_partial = [&] {
        if (cfg.out_dir.empty()) return;
        std::filesystem::create_directories(cfg.out_dir);
        emit_trace(out.trace, cfg.out_dir + "/trace.csv");
    };

    try {
        if (cfg.pretrain) {
            const auto n_warm = window_count(warm.length(), L, H);
            for (Eigen::Index t = 0; t < n_warm; ++t) {
                const auto w = window_at(warm, t, L, H);
                grad_step(model, adam, w.lookback, w.target);
            }
        }

        DriftDetector detector(cfg.detector);
        MemoryBank recent(cfg.detector.window);
        MemoryBank prev(cfg.prev_capacity);
        ProtocolState<detail::Pending> proto(cfg.protocol, H);

        double sum_mse = 0.0, sum_mae = 0.0;
        const auto n_rounds = static_cast<long>(window_count(online.length(), L, H));
        rep.issued_rounds = n_rounds;
        for (long r = 0; r < n_rounds; ++r) {
            auto pair = window_at(online, r, L, H);
            Eigen::MatrixXd forecast = model.predict(pair.lookback);
            const auto revealed = proto.advance(r, detail::Pending{std::move(pair), std::move(forecast)});

            for (const auto& tr : revealed.train) {
                grad_step(model, adam, tr.payload.pair.lookback, tr.payload.pair.target);
                ++rep.training_updates;
            }
            for (const auto& sc : revealed.scored) {
                const auto& p = sc.payload;
                TraceRow row;
                row.round = sc.round;
                row.mse = mse_loss(p.forecast, p.pair.target);
                row.mae = mae_metric(p.forecast, p.pair.target);
                sum_mse += row.mse;
                sum_mae += row.mae;
                const double n = static_cast<double>(out.trace.size() + 1);
                row.cumulative_mean_mse = sum_mse / n;
                row.cumulative_mean_mae = sum_mae / n;

                if (auto evicted = recent.push(p.pair)) prev.push(std::move(*evicted));
                if (cfg.method == Method::Naive) {
                    out.verdicts.push_back(Verdict{sc.round});
                    out.trace.push_back(row);
                    continue;
                }
                detector.record(row.mse);
                const Verdict v = detector.check(sc.round);
                row.verdict = v.kind;
                out.verdicts.push_back(v);
                out.trace.push_back(row);
                if (!v.triggers()) continue;

                if (v.kind == VerdictKind::DriftAlarm) {
                    rep.alarms.push_back({sc.round, *v.z});
                } else {
                    rep.scheduled_refreshes.push_back(sc.round);
                }
                {
                    const auto event_index = static_cast<std::uint64_t>(rep.adaptation_events.size());
                    const Eigen::VectorXd s = feature_variance({&prev, &recent});
                    const AugmentedSet aug =
                        prev.empty() ? AugmentedSet{} : synthesize_augmented(prev, s, detail::mix_seed(cfg.seed, 2 * event_index));
                    AdaptConfig ev = acfg;
                    ev.seed = detail::mix_seed(cfg.seed, 2 * event_index + 1);
                    AdamState fresh = AdamState::zeros(fspec.param_count(), ev.lr_init, cfg.weight_decay);
                    AdaptationEvent e;
                    e.event_round = sc.round;
                    e.trigger = v.kind == VerdictKind::DriftAlarm ? "alarm" : "scheduled";
                    e.pre_loss = mean_loss(model, recent);
                    const auto res = adapt(model, fresh, recent, aug, ev);
                    e.post_loss = mean_loss(model, recent);
                    e.epochs = res.epochs;
                    e.lr_path = res.lr_path;
                    e.aborted = res.aborted;
                    e.gradient_entries = res.gradient_entries;
                    e.wall_seconds = res.wall_seconds;
                    rep.adaptation_events.push_back(std::move(e));
                }
                detector.reset();
            }
        }
        rep.unrevealed_rounds = static_cast<long>(proto.pending());
        rep.n_rounds = static_cast<long>(out.trace.size());
        if (!out.trace.empty()) std::tie(rep.accumulated_mse, rep.accumulated_mae) = accumulate(out.trace);
    } catch (...) {
        flush_partial();
        throw;
    }
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        emit_report(rep, cfg.out_dir + "/report.json");
        emit_trace(out.trace, cfg.out_dir + "/trace.csv");
        emit_verdicts(out.verdicts, cfg.out_dir + "/verdicts.jsonl");
        save_checkpoint(model, cfg.out_dir + "/model.ckpt");
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Suites

struct SuiteRow {
    std::string method;
    std::string protocol;
    int horizon = 0;
    std::uint64_t seed = 0;
    double mse = 0.0;
    double mae = 0.0;
    bool ok = false;
    std::string error;
};

struct SuiteSummaryRow {
    std::string method;
    std::string protocol;
    int horizon = 0;
    long runs = 0;
    double mean_mse = 0.0;
    double mean_mae = 0.0;
};

/// Thread cap from DRIFT_FORGE_THREADS (unset or invalid: no cap).
inline int thread_cap(int requested) {
    int n = std::max(1, requested);
    if (const char* env = std::getenv("DRIFT_FORGE_THREADS")) {
        int cap = 0;
        const std::string_view s(env);
        if (std::from_chars(s.data(), s.data() + s.size(), cap).ec == std::errc() && cap > 0) n = std::min(n, cap);
    }
    return n;
}

/// Runs every config independently; a failure is recorded in its row and the suite
/// continues. Rows come back in config order regardless of completion order.
inline std::vector<SuiteRow> run_suite(const std::vector<ExperimentConfig>& configs, int parallelism) {
    std::vector<SuiteRow> rows(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            const auto& c = configs[i];
            SuiteRow& row = rows[i];
            row.method = to_string(c.method);
            row.protocol = to_string(c.protocol);
            row.horizon = c.horizon;
            row.seed = c.seed;
            try {
                const auto res = run_experiment(c);
                row.mse = res.report.accumulated_mse;
                row.mae = res.report.accumulated_mae;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    const int n = std::min<int>(thread_cap(parallelism), static_cast<int>(std::max<std::size_t>(1, configs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

/// Mean MSE/MAE per (method, protocol, horizon) over successful rows.
inline std::vector<SuiteSummaryRow> summarize(const std::vector<SuiteRow>& rows) {
    std::map<std::tuple<std::string, std::string, int>, SuiteSummaryRow> groups;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        auto& g = groups[{r.method, r.protocol, r.horizon}];
        g.method = r.method;
        g.protocol = r.protocol;
        g.horizon = r.horizon;
        ++g.runs;
        g.mean_mse += r.mse;
        g.mean_mae += r.mae;
    }
    std::vector<SuiteSummaryRow> out;
    for (auto& [key, g] : groups) {
        g.mean_mse /= static_cast<double>(g.runs);
        g.mean_mae /= static_cast<double>(g.runs);
        out.push_back(g);
    }
    return out;
}

inline void write_suite_rows(std::ostream& out, const std::vector<SuiteRow>& rows) {
    out << "method,protocol,horizon,seed,mse,mae,status\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.protocol << ',' << r.horizon << ',' << r.seed << ',';
        detail::write_number(out, r.mse);
        out << ',';
        detail::write_number(out, r.mae);
        out << ',' << (r.ok ? "ok" : "failed") << '\n';
    }
}

inline void write_suite_summary(std::ostream& out, const std::vector<SuiteSummaryRow>& rows) {
    out << "method,protocol,horizon,runs,mean_mse,mean_mae\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.protocol << ',' << r.horizon << ',' << r.runs << ',';
        detail::write_number(out, r.mean_mse);
        out << ',';
        detail::write_number(out, r.mean_mae);
        out << '\n';
    }
}

/// Expands a grid file: {"base": {...}, "methods": [...], "horizons": [...],
/// "protocols": [...], "seeds": [...], "parallelism": n}. Missing axes take the base value.
inline std::pair<std::vector<ExperimentConfig>, int> expand_grid(const nlohmann::json& grid) {
    const ExperimentConfig base = grid.value("base", nlohmann::json::object()).get<ExperimentConfig>();
    auto axis = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        return grid.contains(key) ? grid.at(key).get<std::vector<T>>() : std::vector<T>{fallback};
    };
    const auto methods = axis("methods", to_string(base.method));
    const auto protocols = axis("protocols", to_string(base.protocol));
    const auto horizons = axis("horizons", base.horizon);
    const auto seeds = axis("seeds", base.seed);
    std::vector<ExperimentConfig> configs;
    for (const auto& m : methods)
        for (const auto& p : protocols)
            for (int h : horizons)
                for (auto s : seeds) {
                    ExperimentConfig c = base;
                    c.method = method_from_string(m);
                    c.protocol = protocol_from_string(p);
                    c.horizon = h;
                    c.seed = s;
                    if (!c.out_dir.empty())
                        c.out_dir += "/" + m + "_" + p + "_h" + std::to_string(h) + "_s" + std::to_string(s);
                    configs.push_back(std::move(c));
                }
    return {configs, grid.value("parallelism", 1)};
}

}  // namespace driftforge

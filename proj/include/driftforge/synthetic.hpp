#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "driftforge/error.hpp"
#include "driftforge/series.hpp"

namespace driftforge {

/// One stationary segment of a piecewise AR(p) stream.
struct Regime {
    long length = 0;
    /// Either one coefficient list shared by every channel, or one list per channel.
    std::vector<std::vector<double>> ar_coefficients;
    double noise_scale = 1.0;
    double level_offset = 0.0;
};

struct SyntheticSpec {
    std::vector<Regime> regimes;
    int channels = 1;
    std::uint64_t seed = 0;

    long total_length() const {
        long n = 0;
        for (const auto& r : regimes) n += r.length;
        return n;
    }

    /// Row index at which each regime starts.
    std::vector<long> boundaries() const {
        std::vector<long> b;
        long at = 0;
        for (const auto& r : regimes) {
            b.push_back(at);
            at += r.length;
        }
        return b;
    }
};

/// Spectral radius of the companion matrix of x_t = sum_p a_p x_{t-p}.
inline double ar_spectral_radius(const std::vector<double>& coeffs) {
    const auto p = static_cast<Eigen::Index>(coeffs.size());
    if (p == 0) return 0.0;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) companion(0, i) = coeffs[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline const std::vector<double>& channel_coeffs(const Regime& r, int channel) {
    return r.ar_coefficients.size() == 1 ? r.ar_coefficients.front()
                                         : r.ar_coefficients[static_cast<std::size_t>(channel)];
}

}  // namespace detail

/// Throws ConfigError when a regime is empty, malformed, or unstable. `min_regime_length`
/// is typically L + H.
inline void validate(const SyntheticSpec& spec, long min_regime_length = 1) {
    if (spec.channels < 1) throw ConfigError("synthetic spec needs at least one channel");
    if (spec.regimes.empty()) throw ConfigError("synthetic spec needs at least one regime");
    for (std::size_t i = 0; i < spec.regimes.size(); ++i) {
        const auto& r = spec.regimes[i];
        const auto tag = "regime " + std::to_string(i) + ": ";
        if (r.length < std::max(1L, min_regime_length))
            throw ConfigError(tag + "length " + std::to_string(r.length) + " below minimum " +
                              std::to_string(std::max(1L, min_regime_length)));
        if (r.ar_coefficients.size() != 1 && r.ar_coefficients.size() != static_cast<std::size_t>(spec.channels))
            throw ConfigError(tag + "ar_coefficients must have 1 or `channels` lists");
        if (!(r.noise_scale >= 0.0) || !std::isfinite(r.noise_scale) || !std::isfinite(r.level_offset))
            throw ConfigError(tag + "noise_scale must be finite and non-negative");
        for (const auto& coeffs : r.ar_coefficients) {
            for (double a : coeffs)
                if (!std::isfinite(a)) throw ConfigError(tag + "non-finite AR coefficient");
            if (ar_spectral_radius(coeffs) >= 1.0) throw ConfigError(tag + "AR coefficients are not stable");
        }
    }
}

/// Piecewise-stationary AR stream: within a regime, x_t = level + e_t with
/// e_t = sum_p a_p e_{t-p} + noise_scale * eps_t. The deviation process carries over
/// regime boundaries, so a boundary changes the level and dynamics without resetting state.
inline MultivariateSeries generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::size_t max_order = 0;
    for (const auto& r : spec.regimes)
        for (const auto& c : r.ar_coefficients) max_order = std::max(max_order, c.size());

    const int m = spec.channels;
    MultivariateSeries s;
    s.values.resize(spec.total_length(), m);
    s.channel_names = default_channel_names(m);
    s.origin = SeriesOrigin::Synthetic;

    // history[j][p] = e_{t-1-p} for channel j
    std::vector<std::vector<double>> history(static_cast<std::size_t>(m), std::vector<double>(max_order, 0.0));
    Eigen::Index row = 0;
    for (const auto& regime : spec.regimes) {
        for (long step = 0; step < regime.length; ++step, ++row) {
            for (int j = 0; j < m; ++j) {
                const auto& coeffs = detail::channel_coeffs(regime, j);
                auto& h = history[static_cast<std::size_t>(j)];
                double e = regime.noise_scale * gauss(rng);
                for (std::size_t p = 0; p < coeffs.size(); ++p) e += coeffs[p] * h[p];
                if (max_order > 0) {
                    for (std::size_t p = max_order - 1; p > 0; --p) h[p] = h[p - 1];
                    h[0] = e;
                }
                s.values(row, j) = regime.level_offset + e;
            }
        }
    }
    return s;
}

inline void to_json(nlohmann::json& j, const Regime& r) {
    j = nlohmann::json{{"length", r.length},
                       {"ar_coefficients", r.ar_coefficients},
                       {"noise_scale", r.noise_scale},
                       {"level_offset", r.level_offset}};
}

inline void from_json(const nlohmann::json& j, Regime& r) {
    r.length = j.at("length").get<long>();
    const auto& ar = j.at("ar_coefficients");
    r.ar_coefficients.clear();
    if (ar.is_array() && !ar.empty() && ar.front().is_number()) {
        r.ar_coefficients.push_back(ar.get<std::vector<double>>());
    } else {
        r.ar_coefficients = ar.get<std::vector<std::vector<double>>>();
    }
    if (r.ar_coefficients.empty()) r.ar_coefficients.push_back({});
    r.noise_scale = j.value("noise_scale", 1.0);
    r.level_offset = j.value("level_offset", 0.0);
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
    j = nlohmann::json{{"regimes", s.regimes}, {"channels", s.channels}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
    s.regimes = j.at("regimes").get<std::vector<Regime>>();
    s.channels = j.at("channels").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
}

inline SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synthetic spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return j.get<SyntheticSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid synthetic spec " + path + ": " + e.what());
    }
}

/// The three-regime, four-channel drift stream used by the end-to-end checks:
/// level and AR-coefficient shifts at rows 2000 and 4000.
inline SyntheticSpec three_regime_stream(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.channels = 4;
    spec.seed = seed;
    spec.regimes = {
        Regime{2000, {{0.8, 0.1}, {0.6}, {0.9}, {0.5, 0.3}}, 0.5, 0.0},
        Regime{2000, {{0.3}, {0.85, -0.2}, {0.5}, {0.9}}, 0.5, 3.0},
        Regime{2000, {{0.9}, {0.4}, {0.7, 0.2}, {0.2}}, 0.5, -2.0},
    };
    return spec;
}

}  // namespace driftforge

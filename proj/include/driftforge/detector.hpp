#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "driftforge/error.hpp"

namespace driftforge {

/// Two-sided standard-normal critical value: Phi^{-1}(1 - alpha_t / 2).
inline double threshold_from_significance(double alpha_t) {
    if (!(alpha_t > 0.0 && alpha_t < 1.0)) throw ConfigError("alpha_t must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), 1.0 - alpha_t / 2.0);
}

struct DetectorConfig {
    std::size_t window = 16;        // l_w
    double alpha_t = 0.01;
    std::size_t reset_period = 1024;  // m_t

    double threshold() const { return threshold_from_significance(alpha_t); }

    void validate() const {
        if (window < 2) throw ConfigError("detector window must be at least 2");
        if (reset_period < window) throw ConfigError("detector reset period must be >= window");
        threshold_from_significance(alpha_t);
    }
};

enum class VerdictKind { NoDrift, DriftAlarm, ScheduledRefresh };

inline std::string to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::DriftAlarm:
            return "alarm";
        case VerdictKind::ScheduledRefresh:
            return "scheduled";
        default:
            return "none";
    }
}

inline VerdictKind verdict_kind_from_string(const std::string& s) {
    if (s == "alarm") return VerdictKind::DriftAlarm;
    if (s == "scheduled") return VerdictKind::ScheduledRefresh;
    if (s == "none") return VerdictKind::NoDrift;
    throw ConfigError("unknown verdict kind '" + s + "'");
}

struct Verdict {
    long round = 0;
    VerdictKind kind = VerdictKind::NoDrift;
    std::optional<double> z;
    std::optional<double> mu;
    std::optional<double> sigma;
    std::optional<double> mu_tilde;

    bool triggers() const { return kind != VerdictKind::NoDrift; }
};

inline nlohmann::json to_json_line(const Verdict& v) {
    auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
    return {{"round", v.round}, {"kind", to_string(v.kind)}, {"z", opt(v.z)},
            {"mu", opt(v.mu)},   {"sigma", opt(v.sigma)},     {"mu_tilde", opt(v.mu_tilde)}};
}

inline constexpr double kSigmaGuard = 1e-12;

/// Loss-distribution monitor. Losses accumulate in a buffer B since the last reset; the
/// trailing `window` entries are tested against the whole buffer with
/// z = (mean(B[-l_w:]) - mean(B)) / (std(B) / sqrt(|B|)). Only increases alarm.
class DriftDetector {
  public:
    explicit DriftDetector(DetectorConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        threshold_ = cfg_.threshold();
    }

    const DetectorConfig& config() const { return cfg_; }
    double threshold() const { return threshold_; }
    const std::vector<double>& losses() const { return losses_; }
    std::size_t steps_since_reset() const { return steps_; }

    void record(double loss) {
        if (!std::isfinite(loss) || loss < 0.0) throw ConfigError("detector loss must be finite and >= 0");
        losses_.push_back(loss);
        ++steps_;
        // Welford
        const double n = static_cast<double>(losses_.size());
        const double delta = loss - mean_;
        mean_ += delta / n;
        m2_ += delta * (loss - mean_);
    }

    Verdict check(long round = 0) const {
        Verdict v;
        v.round = round;
        const std::size_t n = losses_.size();
        if (n >= 2) {
            const double sigma = std::sqrt(std::max(m2_, 0.0) / static_cast<double>(n - 1));
            const std::size_t w = std::min(cfg_.window, n);
            double tail = 0.0;
            for (std::size_t i = n - w; i < n; ++i) tail += losses_[i];
            tail /= static_cast<double>(w);
            v.mu = mean_;
            v.sigma = sigma;
            v.mu_tilde = tail;
            if (sigma > kSigmaGuard) v.z = (tail - mean_) / (sigma / std::sqrt(static_cast<double>(n)));
        }
        if (n > cfg_.window && v.z && *v.z > threshold_ && *v.mu_tilde > *v.mu) {
            v.kind = VerdictKind::DriftAlarm;
        } else if (steps_ >= cfg_.reset_period) {
            v.kind = VerdictKind::ScheduledRefresh;
        }
        return v;
    }

    void reset() {
        losses_.clear();
        steps_ = 0;
        mean_ = 0.0;
        m2_ = 0.0;
    }

  private:
    DetectorConfig cfg_;
    double threshold_ = 0.0;
    std::vector<double> losses_;
    std::size_t steps_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace driftforge

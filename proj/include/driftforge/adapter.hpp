#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "driftforge/error.hpp"
#include "driftforge/forecaster.hpp"
#include "driftforge/series.hpp"

namespace driftforge {

/// FIFO store of revealed window pairs; eviction is strictly oldest-first.
class MemoryBank {
  public:
    explicit MemoryBank(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("memory bank capacity must be positive");
    }

    /// Appends `pair`; returns the evicted oldest item when over capacity.
    std::optional<WindowPair> push(WindowPair pair) {
        items_.push_back(std::move(pair));
        if (items_.size() <= capacity_) return std::nullopt;
        WindowPair evicted = std::move(items_.front());
        items_.pop_front();
        return evicted;
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const WindowPair& operator[](std::size_t i) const { return items_[i]; }
    const std::deque<WindowPair>& items() const { return items_; }
    void clear() { items_.clear(); }

  private:
    std::size_t capacity_;
    std::deque<WindowPair> items_;
};

namespace detail {

// Channel-major flattening, matching Forecaster::flatten_input.
inline Eigen::VectorXd flat(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd xt = x.transpose();
    return Eigen::Map<const Eigen::VectorXd>(xt.data(), xt.size());
}

}  // namespace detail

/// Per-coordinate sample variance (n-1) of the flattened look-back inputs across every
/// pair held by `banks`. A single pair yields zeros.
inline Eigen::VectorXd feature_variance(std::initializer_list<const MemoryBank*> banks) {
    std::size_t n = 0;
    Eigen::Index dim = -1;
    for (const auto* b : banks) {
        for (const auto& p : b->items()) {
            if (dim < 0) dim = p.lookback.size();
            if (p.lookback.size() != dim) throw ConfigError("memory banks hold inputs of different shapes");
            ++n;
        }
    }
    if (n == 0) throw ConfigError("feature_variance needs at least one stored pair");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto* b : banks)
        for (const auto& p : b->items()) mean += detail::flat(p.lookback);
    mean /= static_cast<double>(n);
    if (n == 1) return Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(dim);
    for (const auto* b : banks)
        for (const auto& p : b->items()) ss += (detail::flat(p.lookback) - mean).cwiseAbs2();
    return ss / static_cast<double>(n - 1);
}

inline Eigen::VectorXd feature_variance(const MemoryBank& bank) { return feature_variance({&bank}); }

/// Noise-perturbed copies (x + u, y), u ~ N(0, diag(s)), of a snapshot of historical pairs.
struct AugmentedSet {
    std::vector<WindowPair> pairs;
    std::vector<std::size_t> source_ids;

    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }
};

inline AugmentedSet synthesize_augmented(const MemoryBank& source, const Eigen::VectorXd& variance,
                                         std::uint64_t seed) {
    if (!variance.allFinite() || (variance.array() < 0.0).any())
        throw ConfigError("variance vector must be finite and non-negative");
    AugmentedSet out;
    out.pairs.reserve(source.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Eigen::VectorXd scale = variance.cwiseSqrt();
    for (std::size_t i = 0; i < source.size(); ++i) {
        const auto& src = source[i];
        if (src.lookback.size() != variance.size()) throw ConfigError("variance vector length mismatch");
        WindowPair p = src;
        const Eigen::Index channels = src.lookback.rows();
        const Eigen::Index len = src.lookback.cols();
        for (Eigen::Index j = 0; j < channels; ++j)
            for (Eigen::Index l = 0; l < len; ++l) p.lookback(j, l) += scale(j * len + l) * gauss(rng);
        out.pairs.push_back(std::move(p));
        out.source_ids.push_back(i);
    }
    return out;
}

enum class AdaptMode { Full, RegressorOnly };

struct AdaptConfig {
    double lambda = 0.1;
    AdaptMode mode = AdaptMode::Full;
    int max_epochs = 20;
    int steps_per_epoch = 0;  // 0: max(1, ceil(|M| / batch_size))
    int batch_size = 8;
    double lr_init = 1e-3;
    double plateau_decay_factor = 3.0;
    double lr_min = 1e-5;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
        if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
        if (!(plateau_decay_factor > 1.0)) throw ConfigError("plateau_decay_factor must exceed 1");
        if (!(lr_min < lr_init)) throw ConfigError("lr_min must be below lr_init");
    }
};

struct AdaptResult {
    std::vector<double> epoch_losses;
    std::vector<double> lr_path;
    int epochs = 0;
    long updates = 0;
    long gradient_entries = 0;
    bool aborted = false;
    double wall_seconds = 0.0;
};

inline constexpr int kLambdaChannelThreshold = 20;

/// Augmentation weight: 2.0 for many-channel data (M >= 20), 0.1 otherwise.
inline double select_lambda(int channels, std::optional<double> override_value = std::nullopt) {
    if (channels < 1) throw ConfigError("channel count must be positive");
    if (override_value) return *override_value;
    return channels >= kLambdaChannelThreshold ? 2.0 : 0.1;
}

/// Re-tunes `model` on mini-batches drawn with replacement from `recent`, regularized by
/// lambda times the loss on mini-batches drawn from `augmented`. Full mode updates every
/// parameter at a constant rate. RegressorOnly freezes the encoder and divides the rate by
/// `plateau_decay_factor` whenever an epoch's mean loss fails to drop, stopping once it
/// falls below `lr_min`. A non-finite loss or gradient restores the entry state exactly.
inline AdaptResult adapt(Forecaster& model, AdamState& adam, const MemoryBank& recent, const AugmentedSet& augmented,
                         const AdaptConfig& cfg) {
    cfg.validate();
    if (recent.empty()) throw ConfigError("adaptation needs a non-empty memory bank");
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::VectorXd saved_params = model.params();
    const AdamState saved_adam = adam;

    const bool frozen = cfg.mode == AdaptMode::RegressorOnly;
    const Eigen::Index begin = frozen ? model.spec().encoder_size() : 0;
    const Eigen::Index count = model.spec().param_count();
    const bool use_aug = cfg.lambda > 0.0 && !augmented.empty();
    const int steps = cfg.steps_per_epoch > 0
                          ? cfg.steps_per_epoch
                          : std::max(1, static_cast<int>((recent.size() + cfg.batch_size - 1) / cfg.batch_size));
    const double inv_b = 1.0 / cfg.batch_size;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_recent(0, recent.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_aug(0, use_aug ? augmented.size() - 1 : 0);

    AdaptResult res;
    double lr = cfg.lr_init;
    std::optional<double> prev;
    Eigen::VectorXd grad(count);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        adam.lr = lr;
        double total = 0.0;
        for (int s = 0; s < steps; ++s) {
            grad.setZero();
            double loss = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const auto& p = recent[pick_recent(rng)];
                loss += inv_b * model.accumulate_gradient(p.lookback, p.target, inv_b, grad, frozen);
            }
            if (use_aug) {
                for (int b = 0; b < cfg.batch_size; ++b) {
                    const auto& p = augmented.pairs[pick_aug(rng)];
                    loss += cfg.lambda * inv_b *
                            model.accumulate_gradient(p.lookback, p.target, cfg.lambda * inv_b, grad, frozen);
                }
            }
            if (!std::isfinite(loss) || !adam_update(model.params(), adam, grad, begin, count)) {
                model.params() = saved_params;
                adam = saved_adam;
                res.aborted = true;
                res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return res;
            }
            total += loss;
            ++res.updates;
            res.gradient_entries += count - begin;
        }
        const double mean = total / steps;
        res.epoch_losses.push_back(mean);
        res.lr_path.push_back(lr);
        res.epochs = epoch + 1;
        if (frozen) {
            if (prev && !(mean < *prev)) lr /= cfg.plateau_decay_factor;
            prev = mean;
            if (lr < cfg.lr_min) break;
        }
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline AdaptResult adapt_full(Forecaster& model, AdamState& adam, const MemoryBank& recent,
                              const AugmentedSet& augmented, AdaptConfig cfg) {
    cfg.mode = AdaptMode::Full;
    return adapt(model, adam, recent, augmented, cfg);
}

inline AdaptResult adapt_regressor_only(Forecaster& model, AdamState& adam, const MemoryBank& recent,
                                        const AugmentedSet& augmented, AdaptConfig cfg) {
    cfg.mode = AdaptMode::RegressorOnly;
    return adapt(model, adam, recent, augmented, cfg);
}

/// Mean single-example loss of `model` over a bank.
inline double mean_loss(const Forecaster& model, const MemoryBank& bank) {
    if (bank.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : bank.items()) s += mse_loss(model.predict(p.lookback), p.target);
    return s / static_cast<double>(bank.size());
}

}  // namespace driftforge

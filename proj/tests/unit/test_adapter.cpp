#include <algorithm>
#include <deque>
#include <random>

#include <gtest/gtest.h>

#include "driftforge/adapter.hpp"
#include "driftforge/synthetic.hpp"

using namespace driftforge;

namespace {

WindowPair pair_of(double v, Eigen::Index m = 1, Eigen::Index l = 2, long id = 0) {
    WindowPair p;
    p.lookback = Eigen::MatrixXd::Constant(m, l, v);
    p.target = Eigen::MatrixXd::Constant(m, 1, v);
    p.step_index = id;
    return p;
}

ForecasterSpec spec_of(ModelKind kind, int m, int l, int h, int width = 64, std::uint64_t seed = 0) {
    ForecasterSpec s;
    s.kind = kind;
    s.channels = m;
    s.lookback = l;
    s.horizon = h;
    s.hidden_width = width;
    s.init_seed = seed;
    return s;
}

// Two-regime stream; level and dynamics change at `len`.
MultivariateSeries two_regimes(std::uint64_t seed, long len = 1200) {
    SyntheticSpec spec;
    spec.channels = 2;
    spec.seed = seed;
    spec.regimes = {Regime{len, {{0.8}, {0.5, 0.2}}, 0.5, 0.0}, Regime{len, {{0.2}, {0.9}}, 0.5, 3.0}};
    return generate_synthetic(spec);
}

struct Scenario {
    Forecaster model;
    MemoryBank recent{16};
    MemoryBank prev{512};
    std::vector<WindowPair> held_new;
    std::vector<WindowPair> held_old;
};

// Model pre-trained on regime 1; M holds the first regime-2 windows, M_prev holds regime-1 windows.
Scenario make_scenario(std::uint64_t seed, ModelKind kind = ModelKind::Linear) {
    const int l = 8, h = 2;
    const auto s = two_regimes(seed);
    Scenario sc;
    sc.model = Forecaster::init(spec_of(kind, 2, l, h, 16, seed));
    auto adam = AdamState::zeros(sc.model.spec().param_count(), 1e-2);
    for (long t = 0; t < 600; ++t) {
        const auto w = window_at(s, t, l, h);
        grad_step(sc.model, adam, w.lookback, w.target);
    }
    for (long t = 600 - 512; t < 600; ++t) sc.prev.push(window_at(s, t, l, h));
    for (long t = 1200; t < 1216; ++t) sc.recent.push(window_at(s, t, l, h));
    for (long t = 1300; t < 1500; ++t) sc.held_new.push_back(window_at(s, t, l, h));
    for (long t = 800; t < 1000; ++t) sc.held_old.push_back(window_at(s, t, l, h));
    return sc;
}

double held_loss(const Forecaster& f, const std::vector<WindowPair>& held) {
    double s = 0.0;
    for (const auto& p : held) s += mse_loss(f.predict(p.lookback), p.target);
    return s / static_cast<double>(held.size());
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Bank, FifoEviction) {
    MemoryBank b(2);
    EXPECT_FALSE(b.push(pair_of(1)).has_value());
    EXPECT_FALSE(b.push(pair_of(2)).has_value());
    const auto ev = b.push(pair_of(3));
    ASSERT_TRUE(ev.has_value());
    EXPECT_EQ(ev->target(0, 0), 1.0);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].target(0, 0), 2.0);
    EXPECT_EQ(b[1].target(0, 0), 3.0);
    EXPECT_THROW(MemoryBank(0), ConfigError);
}

TEST(Bank, MatchesReferenceQueue) {
    std::mt19937_64 rng(9);
    MemoryBank b(7);
    std::deque<long> ref;
    std::vector<long> evicted, ref_evicted;
    for (long i = 0; i < 100; ++i) {
        const long id = static_cast<long>(rng() % 1000);
        if (auto e = b.push(pair_of(0.0, 1, 2, id))) evicted.push_back(e->step_index);
        ref.push_back(id);
        if (ref.size() > 7) {
            ref_evicted.push_back(ref.front());
            ref.pop_front();
        }
        ASSERT_EQ(b.size(), ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_EQ(b[k].step_index, ref[k]);
    }
    EXPECT_EQ(evicted, ref_evicted);
}

TEST(Variance, ConstantAndHandValues) {
    MemoryBank b(4);
    b.push(pair_of(3.0));
    b.push(pair_of(3.0));
    EXPECT_TRUE(feature_variance(b).isZero(0.0));
    MemoryBank c(4);
    c.push(pair_of(0.0));
    c.push(pair_of(2.0));
    EXPECT_DOUBLE_EQ(feature_variance(c)(0), 2.0);
    MemoryBank empty(2);
    EXPECT_THROW(feature_variance(empty), ConfigError);
}

TEST(Variance, OrderAndSplitInvariant) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<WindowPair> items;
    for (int i = 0; i < 30; ++i) {
        WindowPair p;
        p.lookback = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return g(rng); });
        p.target = Eigen::MatrixXd::Zero(3, 1);
        items.push_back(p);
    }
    MemoryBank all(64), a(64), b(64), shuffled(64);
    for (int i = 0; i < 30; ++i) {
        all.push(items[i]);
        (i < 11 ? a : b).push(items[i]);
    }
    std::shuffle(items.begin(), items.end(), rng);
    for (const auto& p : items) shuffled.push(p);
    const auto ref = feature_variance(all);
    EXPECT_LT((feature_variance({&a, &b}) - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((feature_variance(shuffled) - ref).cwiseAbs().maxCoeff(), 1e-12);
    // Coordinate (j, l) maps to flat index j * L + l.
    double mean = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) mean += all[i].lookback(2, 1);
    mean /= 30.0;
    for (std::size_t i = 0; i < all.size(); ++i) ss += std::pow(all[i].lookback(2, 1) - mean, 2);
    EXPECT_NEAR(ref(2 * 4 + 1), ss / 29.0, 1e-12);
}

TEST(Augment, ZeroVarianceCopiesSource) {
    MemoryBank b(4);
    b.push(pair_of(1.0, 2, 3));
    b.push(pair_of(-2.0, 2, 3));
    const auto aug = synthesize_augmented(b, Eigen::VectorXd::Zero(6), 5);
    ASSERT_EQ(aug.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_TRUE(aug.pairs[i].lookback == b[i].lookback);
        EXPECT_TRUE(aug.pairs[i].target == b[i].target);
        EXPECT_EQ(aug.source_ids[i], i);
    }
}

TEST(Augment, NoiseMomentsMatchVariance) {
    const Eigen::Index m = 2, l = 3;
    MemoryBank b(10000);
    for (int i = 0; i < 10000; ++i) b.push(pair_of(0.25 * (i % 5), m, l));
    Eigen::VectorXd s(6);
    s << 0.1, 0.5, 1.0, 2.0, 4.0, 9.0;
    const auto aug = synthesize_augmented(b, s, 17);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(6), sq = Eigen::VectorXd::Zero(6);
    for (std::size_t i = 0; i < aug.size(); ++i) {
        const Eigen::MatrixXd d = aug.pairs[i].lookback - b[i].lookback;
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index k = 0; k < l; ++k) {
                sum(j * l + k) += d(j, k);
                sq(j * l + k) += d(j, k) * d(j, k);
            }
        ASSERT_TRUE(aug.pairs[i].target == b[i].target);
    }
    const double n = 10000.0;
    for (Eigen::Index c = 0; c < 6; ++c) {
        const double mean = sum(c) / n;
        const double var = (sq(c) - n * mean * mean) / (n - 1.0);
        EXPECT_NEAR(var, s(c), 0.05 * s(c)) << c;
        EXPECT_LE(std::abs(mean), 3.0 * std::sqrt(s(c) / n)) << c;
    }
}

TEST(Augment, DeterministicUnderSeed) {
    MemoryBank b(8);
    for (int i = 0; i < 8; ++i) b.push(pair_of(i, 2, 3));
    const Eigen::VectorXd s = Eigen::VectorXd::Constant(6, 0.7);
    const auto a1 = synthesize_augmented(b, s, 3), a2 = synthesize_augmented(b, s, 3),
               a3 = synthesize_augmented(b, s, 4);
    EXPECT_TRUE(a1.pairs[5].lookback == a2.pairs[5].lookback);
    EXPECT_FALSE(a1.pairs[5].lookback == a3.pairs[5].lookback);
    EXPECT_THROW(synthesize_augmented(b, -s, 3), ConfigError);
}

TEST(Lambda, Selection) {
    EXPECT_EQ(select_lambda(321), 2.0);
    EXPECT_EQ(select_lambda(7), 0.1);
    EXPECT_EQ(select_lambda(20), 2.0);
    EXPECT_EQ(select_lambda(7, 0.5), 0.5);
}

TEST(AdaptConfigTest, Invariants) {
    AdaptConfig c;
    c.lambda = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AdaptConfig{};
    c.plateau_decay_factor = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AdaptConfig{};
    c.lr_min = c.lr_init;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adapt, ZeroEpochsLeavesModel) {
    auto sc = make_scenario(1);
    const Eigen::VectorXd before = sc.model.params();
    AdaptConfig cfg;
    cfg.max_epochs = 0;
    auto adam = AdamState::zeros(before.size(), cfg.lr_init);
    const auto res = adapt_full(sc.model, adam, sc.recent, AugmentedSet{}, cfg);
    EXPECT_TRUE(sc.model.params() == before);
    EXPECT_EQ(res.updates, 0);
}

TEST(Adapt, ZeroLambdaEqualsRecentOnlyTraining) {
    auto sc = make_scenario(2);
    const auto aug = synthesize_augmented(sc.prev, feature_variance({&sc.prev, &sc.recent}), 1);
    AdaptConfig cfg;
    cfg.lambda = 0.0;
    cfg.seed = 99;
    Forecaster a = sc.model, b = sc.model;
    auto adam_a = AdamState::zeros(a.params().size(), cfg.lr_init);
    auto adam_b = adam_a;
    adapt_full(a, adam_a, sc.recent, aug, cfg);
    adapt_full(b, adam_b, sc.recent, AugmentedSet{}, cfg);
    EXPECT_TRUE(a.params() == b.params());

    // Reference trajectory: plain Adam on batches drawn from M alone.
    Forecaster c = sc.model;
    auto adam_c = AdamState::zeros(c.params().size(), cfg.lr_init);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, sc.recent.size() - 1);
    for (int e = 0; e < cfg.max_epochs; ++e)
        for (int s = 0; s < 2; ++s) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(c.params().size());
            for (int k = 0; k < 8; ++k) {
                const auto& p = sc.recent[pick(rng)];
                c.accumulate_gradient(p.lookback, p.target, 1.0 / 8, g);
            }
            adam_update(c.params(), adam_c, g, 0, c.params().size());
        }
    EXPECT_LT((c.params() - a.params()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Adapt, AbortRestoresExactly) {
    auto sc = make_scenario(3);
    const Eigen::VectorXd before = sc.model.params();
    MemoryBank bad(4);
    auto p = sc.recent[0];
    p.target(0, 0) = std::numeric_limits<double>::infinity();
    bad.push(p);
    AdaptConfig cfg;
    auto adam = AdamState::zeros(before.size(), cfg.lr_init);
    adam.t = 5;
    adam.m.setConstant(0.25);
    const auto saved = adam;
    const auto res = adapt_full(sc.model, adam, bad, AugmentedSet{}, cfg);
    EXPECT_TRUE(res.aborted);
    EXPECT_TRUE(sc.model.params() == before);
    EXPECT_EQ(adam.t, saved.t);
    EXPECT_TRUE(adam.m == saved.m);
    EXPECT_TRUE(adam.v == saved.v);
}

TEST(Adapt, RegressorOnlyFreezesEncoderAndDecaysByThree) {
    auto sc = make_scenario(4, ModelKind::Mlp);
    const Eigen::VectorXd enc = sc.model.encoder_block();
    const Eigen::VectorXd reg = sc.model.regressor_block();
    const auto aug = synthesize_augmented(sc.prev, feature_variance({&sc.prev, &sc.recent}), 2);
    AdaptConfig cfg;
    cfg.max_epochs = 200;
    cfg.lr_init = 5e-2;
    auto adam = AdamState::zeros(sc.model.params().size(), cfg.lr_init);
    const auto res = adapt_regressor_only(sc.model, adam, sc.recent, aug, cfg);
    EXPECT_TRUE(sc.model.encoder_block() == enc);
    EXPECT_FALSE(sc.model.regressor_block() == reg);
    ASSERT_FALSE(res.lr_path.empty());
    EXPECT_EQ(res.lr_path.front(), cfg.lr_init);
    int decreases = 0;
    for (std::size_t i = 1; i < res.lr_path.size(); ++i) {
        if (res.lr_path[i] == res.lr_path[i - 1]) continue;
        EXPECT_DOUBLE_EQ(res.lr_path[i], res.lr_path[i - 1] / 3.0);
        EXPECT_FALSE(res.epoch_losses[i - 1] < res.epoch_losses[i - 2]);
        ++decreases;
    }
    EXPECT_GT(decreases, 0);
    if (res.epochs < cfg.max_epochs) EXPECT_LT(res.lr_path.back() / 3.0, cfg.lr_min);
}

TEST(Adapt, RegressorOnlyOnLinearMatchesScheduledFull) {
    auto sc = make_scenario(5);
    AdaptConfig cfg;
    cfg.seed = 3;
    Forecaster a = sc.model;
    auto adam_a = AdamState::zeros(a.params().size(), cfg.lr_init);
    const auto res = adapt_regressor_only(a, adam_a, sc.recent, AugmentedSet{}, cfg);
    // Replay the same lr path with full mode one epoch at a time.
    Forecaster b = sc.model;
    auto adam_b = AdamState::zeros(b.params().size(), cfg.lr_init);
    AdaptConfig full = cfg;
    full.max_epochs = res.epochs;
    full.mode = AdaptMode::Full;
    const auto res_b = adapt(b, adam_b, sc.recent, AugmentedSet{}, full);
    if (std::all_of(res.lr_path.begin(), res.lr_path.end(), [&](double v) { return v == cfg.lr_init; })) {
        EXPECT_TRUE(a.params() == b.params());
    }
    EXPECT_EQ(res.gradient_entries, res_b.gradient_entries);
}

TEST(Adapt, ImprovesOnDriftedRegime) {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto sc = make_scenario(seed);
        const double before = held_loss(sc.model, sc.held_new);
        AdaptConfig cfg;
        cfg.seed = seed;
        const auto aug = synthesize_augmented(sc.prev, feature_variance({&sc.prev, &sc.recent}), seed);
        auto adam = AdamState::zeros(sc.model.params().size(), cfg.lr_init);
        adapt_full(sc.model, adam, sc.recent, aug, cfg);
        improved += held_loss(sc.model, sc.held_new) < before;
    }
    EXPECT_GE(improved, 95);
}

TEST(Adapt, ForgettingGuardMedian) {
    std::vector<double> with_aug, without;
    for (std::uint64_t seed = 0; seed < 21; ++seed) {
        auto sc = make_scenario(seed + 500);
        const auto aug = synthesize_augmented(sc.prev, feature_variance({&sc.prev, &sc.recent}), seed);
        AdaptConfig cfg;
        cfg.seed = seed;
        cfg.lambda = 2.0;
        Forecaster a = sc.model, b = sc.model;
        auto adam_a = AdamState::zeros(a.params().size(), cfg.lr_init);
        auto adam_b = adam_a;
        adapt_full(a, adam_a, sc.recent, aug, cfg);
        cfg.lambda = 0.0;
        adapt_full(b, adam_b, sc.recent, aug, cfg);
        with_aug.push_back(held_loss(a, sc.held_old));
        without.push_back(held_loss(b, sc.held_old));
    }
    EXPECT_LE(median(with_aug), median(without));
}

TEST(Adapt, RegressorOnlyCheaperOnWideMlp) {
    auto sc = make_scenario(6);
    Forecaster model = Forecaster::init(spec_of(ModelKind::Mlp, 2, 8, 2, 64, 6));
    AdaptConfig cfg;
    cfg.lr_min = 1e-300;
    cfg.max_epochs = 20;
    Forecaster a = model, b = model;
    auto adam_a = AdamState::zeros(model.params().size(), cfg.lr_init);
    auto adam_b = adam_a;
    const auto full = adapt_full(a, adam_a, sc.recent, AugmentedSet{}, cfg);
    const auto reg = adapt_regressor_only(b, adam_b, sc.recent, AugmentedSet{}, cfg);
    ASSERT_EQ(full.epochs, reg.epochs);
    EXPECT_LT(reg.gradient_entries, full.gradient_entries);
}

TEST(MeanLoss, AveragesBank) {
    const auto f = Forecaster::from_params(spec_of(ModelKind::Linear, 1, 2, 1), Eigen::VectorXd::Zero(3));
    MemoryBank b(3);
    b.push(pair_of(1.0));
    b.push(pair_of(3.0));
    EXPECT_DOUBLE_EQ(mean_loss(f, b), 5.0);
}

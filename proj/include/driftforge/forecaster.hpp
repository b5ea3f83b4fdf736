#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Core>

#include "driftforge/error.hpp"

namespace driftforge {

enum class ModelKind { Linear, Mlp };

inline std::string to_string(ModelKind k) { return k == ModelKind::Linear ? "linear" : "mlp"; }

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelKind::Linear;
    if (s == "mlp") return ModelKind::Mlp;
    throw ConfigError("unknown model kind '" + s + "' (expected linear|mlp)");
}

/// Shape of a forecaster mapping an M x L look-back to an M x H forecast.
///
/// Parameters are stored flat as [encoder | regressor]. Linear has an empty encoder and
/// a single affine regressor. Mlp has an affine+ReLU encoder of width `hidden_width`
/// followed by the affine regressor. Within each affine block the weight matrix comes
/// first (column-major, out x in), then the bias.
struct ForecasterSpec {
    ModelKind kind = ModelKind::Linear;
    int hidden_width = 64;
    int channels = 1;
    int lookback = 1;
    int horizon = 1;
    std::uint64_t init_seed = 0;

    Eigen::Index input_dim() const { return Eigen::Index{channels} * lookback; }
    Eigen::Index output_dim() const { return Eigen::Index{channels} * horizon; }
    Eigen::Index regressor_in() const { return kind == ModelKind::Linear ? input_dim() : hidden_width; }
    Eigen::Index encoder_size() const {
        return kind == ModelKind::Linear ? 0 : (input_dim() + 1) * hidden_width;
    }
    Eigen::Index regressor_size() const { return (regressor_in() + 1) * output_dim(); }
    Eigen::Index param_count() const { return encoder_size() + regressor_size(); }

    void validate() const {
        if (channels < 1 || lookback < 1 || horizon < 1)
            throw ConfigError("forecaster channels, lookback and horizon must be positive");
        if (kind == ModelKind::Mlp && hidden_width < 1)
            throw ConfigError("mlp hidden_width must be positive");
    }

    bool operator==(const ForecasterSpec&) const = default;
};

inline double mse_loss(const Eigen::MatrixXd& yhat, const Eigen::MatrixXd& y) {
    if (yhat.rows() != y.rows() || yhat.cols() != y.cols()) throw ConfigError("mse_loss shape mismatch");
    return (yhat - y).squaredNorm() / static_cast<double>(y.size());
}

inline double mae_metric(const Eigen::MatrixXd& yhat, const Eigen::MatrixXd& y) {
    if (yhat.rows() != y.rows() || yhat.cols() != y.cols()) throw ConfigError("mae_metric shape mismatch");
    return (yhat - y).cwiseAbs().sum() / static_cast<double>(y.size());
}

/// Adam moments plus decoupled weight decay (AdamW form; decay 0 gives plain Adam).
struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long skipped_updates = 0;
    long gradient_entries = 0;

    static AdamState zeros(Eigen::Index n, double lr, double weight_decay = 0.0) {
        AdamState s;
        s.m = Eigen::VectorXd::Zero(n);
        s.v = Eigen::VectorXd::Zero(n);
        s.lr = lr;
        s.weight_decay = weight_decay;
        return s;
    }
};

/// Applies one bias-corrected Adam step to params[begin, end). Entries outside the range
/// and their moments are untouched. Returns false (and counts a skip) if any gradient
/// entry in range is non-finite.
inline bool adam_update(Eigen::Ref<Eigen::VectorXd> params, AdamState& st, const Eigen::VectorXd& grad,
                        Eigen::Index begin, Eigen::Index end) {
    const Eigen::Index n = end - begin;
    if (!grad.segment(begin, n).allFinite()) {
        ++st.skipped_updates;
        return false;
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    auto m = st.m.segment(begin, n);
    auto v = st.v.segment(begin, n);
    auto g = grad.segment(begin, n);
    auto p = params.segment(begin, n);
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseAbs2();
    if (st.lr != 0.0) {
        const auto step = (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
        if (st.weight_decay != 0.0) {
            p.array() -= st.lr * (step + st.weight_decay * p.array());
        } else {
            p.array() -= st.lr * step;
        }
    }
    st.gradient_entries += n;
    return true;
}

class Forecaster {
  public:
    Forecaster() = default;

    /// Weights and biases of each affine block ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static Forecaster init(const ForecasterSpec& spec) {
        spec.validate();
        Forecaster f;
        f.spec_ = spec;
        f.params_.resize(spec.param_count());
        std::mt19937_64 rng(spec.init_seed);
        auto fill = [&](Eigen::Index begin, Eigen::Index count, Eigen::Index fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index i = 0; i < count; ++i) f.params_(begin + i) = u(rng);
        };
        fill(0, spec.encoder_size(), spec.input_dim());
        fill(spec.encoder_size(), spec.regressor_size(), spec.regressor_in());
        return f;
    }

    static Forecaster from_params(const ForecasterSpec& spec, Eigen::VectorXd params) {
        spec.validate();
        if (params.size() != spec.param_count()) throw ConfigError("parameter vector has wrong length");
        Forecaster f;
        f.spec_ = spec;
        f.params_ = std::move(params);
        return f;
    }

    const ForecasterSpec& spec() const { return spec_; }
    const Eigen::VectorXd& params() const { return params_; }
    Eigen::VectorXd& params() { return params_; }

    auto encoder_block() const { return params_.head(spec_.encoder_size()); }
    auto regressor_block() const { return params_.tail(spec_.regressor_size()); }

    Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
        const Eigen::VectorXd in = flatten_input(x);
        Eigen::VectorXd hidden;
        return unflatten_output(forward(in, hidden));
    }

    /// Adds weight * d(mse)/d(theta) into `grad` and returns the unweighted mse. With
    /// `encoder_frozen`, encoder gradients are neither computed nor written.
    double accumulate_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double weight,
                               Eigen::VectorXd& grad, bool encoder_frozen = false) const {
        check_target(y);
        const Eigen::VectorXd in = flatten_input(x);
        Eigen::VectorXd pre;
        const Eigen::VectorXd out = forward(in, pre);
        const Eigen::VectorXd target = flatten_target(y);
        const Eigen::VectorXd resid = out - target;
        const double n = static_cast<double>(resid.size());
        const double loss = resid.squaredNorm() / n;
        const Eigen::VectorXd g_out = (2.0 * weight / n) * resid;

        const Eigen::Index rin = spec_.regressor_in();
        const Eigen::Index out_dim = spec_.output_dim();
        const Eigen::Index roff = spec_.encoder_size();
        Eigen::Map<Eigen::MatrixXd> gW(grad.data() + roff, out_dim, rin);
        auto gb = grad.segment(roff + out_dim * rin, out_dim);

        if (spec_.kind == ModelKind::Linear) {
            gW.noalias() += g_out * in.transpose();
            gb += g_out;
            return loss;
        }
        const Eigen::VectorXd hidden = pre.cwiseMax(0.0);
        gW.noalias() += g_out * hidden.transpose();
        gb += g_out;
        if (encoder_frozen) return loss;

        Eigen::Map<const Eigen::MatrixXd> W2(params_.data() + roff, out_dim, rin);
        Eigen::VectorXd g_hidden = W2.transpose() * g_out;
        for (Eigen::Index i = 0; i < g_hidden.size(); ++i)
            if (pre(i) <= 0.0) g_hidden(i) = 0.0;
        const Eigen::Index hw = spec_.hidden_width;
        Eigen::Map<Eigen::MatrixXd> gW1(grad.data(), hw, spec_.input_dim());
        gW1.noalias() += g_hidden * in.transpose();
        grad.segment(hw * spec_.input_dim(), hw) += g_hidden;
        return loss;
    }

    Eigen::VectorXd flatten_input(const Eigen::MatrixXd& x) const {
        if (x.rows() != spec_.channels || x.cols() != spec_.lookback)
            throw ConfigError("input must be channels x lookback");
        const Eigen::MatrixXd xt = x.transpose();
        return Eigen::Map<const Eigen::VectorXd>(xt.data(), xt.size());
    }

  private:
    void check_target(const Eigen::MatrixXd& y) const {
        if (y.rows() != spec_.channels || y.cols() != spec_.horizon)
            throw ConfigError("target must be channels x horizon");
    }

    Eigen::VectorXd flatten_target(const Eigen::MatrixXd& y) const {
        const Eigen::MatrixXd yt = y.transpose();
        return Eigen::Map<const Eigen::VectorXd>(yt.data(), yt.size());
    }

    Eigen::MatrixXd unflatten_output(const Eigen::VectorXd& out) const {
        return Eigen::Map<const Eigen::MatrixXd>(out.data(), spec_.horizon, spec_.channels).transpose();
    }

    // Returns the flat output; `pre` receives hidden pre-activations (Mlp only).
    Eigen::VectorXd forward(const Eigen::VectorXd& in, Eigen::VectorXd& pre) const {
        const Eigen::Index rin = spec_.regressor_in();
        const Eigen::Index out_dim = spec_.output_dim();
        const Eigen::Index roff = spec_.encoder_size();
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + roff, out_dim, rin);
        auto b = params_.segment(roff + out_dim * rin, out_dim);
        if (spec_.kind == ModelKind::Linear) return W * in + b;

        const Eigen::Index hw = spec_.hidden_width;
        Eigen::Map<const Eigen::MatrixXd> W1(params_.data(), hw, spec_.input_dim());
        auto b1 = params_.segment(hw * spec_.input_dim(), hw);
        pre = W1 * in + b1;
        return W * pre.cwiseMax(0.0) + b;
    }

    ForecasterSpec spec_;
    Eigen::VectorXd params_;
};

/// One online update on a single example. Returns the pre-update loss. With
/// `encoder_frozen`, only the regressor block moves.
inline double grad_step(Forecaster& model, AdamState& adam, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        bool encoder_frozen = false) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.spec().param_count());
    const double loss = model.accumulate_gradient(x, y, 1.0, grad, encoder_frozen);
    const Eigen::Index begin = encoder_frozen ? model.spec().encoder_size() : 0;
    adam_update(model.params(), adam, grad, begin, model.spec().param_count());
    return loss;
}

// Checkpoint: a small text header followed by one shortest-round-trip number per line.

inline void write_checkpoint(std::ostream& out, const Forecaster& f) {
    const auto& s = f.spec();
    out << "driftforge-checkpoint 1\n"
        << "kind " << to_string(s.kind) << "\nhidden_width " << s.hidden_width << "\nchannels " << s.channels
        << "\nlookback " << s.lookback << "\nhorizon " << s.horizon << "\ninit_seed " << s.init_seed
        << "\nparams " << f.params().size() << '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < f.params().size(); ++i) {
        const auto r = std::to_chars(buf, buf + sizeof buf, f.params()(i));
        out.write(buf, r.ptr - buf);
        out << '\n';
    }
}

inline Forecaster read_checkpoint(std::istream& in) {
    std::string key, kind;
    int version = 0;
    ForecasterSpec s;
    Eigen::Index n = 0;
    if (!(in >> key >> version) || key != "driftforge-checkpoint" || version != 1)
        throw ParseError(1, "not a driftforge checkpoint");
    auto expect = [&](const char* name, auto& value) {
        if (!(in >> key >> value) || key != name) throw ParseError(0, std::string("expected field ") + name);
    };
    expect("kind", kind);
    s.kind = model_kind_from_string(kind);
    expect("hidden_width", s.hidden_width);
    expect("channels", s.channels);
    expect("lookback", s.lookback);
    expect("horizon", s.horizon);
    expect("init_seed", s.init_seed);
    expect("params", n);
    Eigen::VectorXd p(n);
    std::string tok;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(in >> tok)) throw ParseError(static_cast<std::size_t>(9 + i), "truncated parameter list");
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), p(i));
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
            throw ParseError(static_cast<std::size_t>(9 + i), "bad parameter '" + tok + "'");
    }
    return Forecaster::from_params(s, std::move(p));
}

inline void save_checkpoint(const Forecaster& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_checkpoint(out, f);
}

inline Forecaster load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    return read_checkpoint(in);
}

}  // namespace driftforge

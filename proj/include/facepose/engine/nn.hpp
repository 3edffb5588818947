#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "facepose/autograd/ops.hpp"

namespace facepose::engine {

using ag::Var;

/// Named parameter list in creation order, plus the RNG that initializes it.
/// Initial values are drawn in double precision so float and double models
/// built from the same seed agree up to rounding.
template <class S>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

    Var<S> normal(const std::string& name, ag::Shape shape, double stddev) {
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<S> v(ag::numel(shape));
        for (auto& x : v) x = static_cast<S>(dist(rng_) * stddev);
        return add(name, std::move(shape), std::move(v));
    }

    Var<S> zeros(const std::string& name, ag::Shape shape) {
        return add(name, shape, std::vector<S>(ag::numel(shape), S(0)));
    }

    Var<S> add(const std::string& name, ag::Shape shape, std::vector<S> values) {
        auto p = Var<S>::parameter(std::move(shape), std::move(values));
        params_.push_back({name, p});
        return p;
    }

    const std::vector<std::pair<std::string, Var<S>>>& params() const { return params_; }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
    std::vector<std::pair<std::string, Var<S>>> params_;
};

enum class Init { Default, Zero };

template <class S>
struct Conv2d {
    Var<S> w, b;
    int stride = 1;
    int pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore<S>& ps, const std::string& name, int cin, int cout, int k = 3, int stride_ = 1, Init init = Init::Default)
        : stride(stride_), pad(k / 2) {
        if (init == Init::Zero) {
            w = ps.zeros(name + ".w", {cout, cin, k, k});
        } else {
            w = ps.normal(name + ".w", {cout, cin, k, k}, 1.0 / std::sqrt(static_cast<double>(cin * k * k)));
        }
        b = ps.zeros(name + ".b", {cout});
    }

    Var<S> operator()(const Var<S>& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

template <class S>
struct Linear {
    Var<S> w, b;

    Linear() = default;
    Linear(ParamStore<S>& ps, const std::string& name, int in, int out, double gain = 1.0) {
        w = ps.normal(name + ".w", {in, out}, gain / std::sqrt(static_cast<double>(in)));
        b = ps.zeros(name + ".b", {out});
    }

    Var<S> operator()(const Var<S>& x) const { return ag::linear(x, w, b); }
};

/// Group normalization with learned per-channel scale (init 1) and shift (init 0).
template <class S>
struct GroupNorm {
    Var<S> gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(ParamStore<S>& ps, const std::string& name, int channels) : groups(channels % 8 == 0 ? 8 : 1) {
        gamma = ps.add(name + ".gamma", {channels}, std::vector<S>(static_cast<std::size_t>(channels), S(1)));
        beta = ps.zeros(name + ".beta", {channels});
    }

    Var<S> operator()(const Var<S>& x) const { return ag::group_norm(x, gamma, beta, groups); }
};

/// Sinusoidal timestep features [1, dim].
template <class S>
Var<S> timestep_embedding(int t, int dim) {
    std::vector<S> v(static_cast<std::size_t>(dim));
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        v[static_cast<std::size_t>(i)] = static_cast<S>(std::sin(t * freq));
        v[static_cast<std::size_t>(half + i)] = static_cast<S>(std::cos(t * freq));
    }
    return Var<S>::constant({1, dim}, std::move(v));
}

/// [N, C, H, W] → [N, H·W, C]
template <class S>
Var<S> to_tokens(const Var<S>& x) {
    return ag::permute(ag::reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)}), {0, 2, 1});
}

/// [N, H·W, C] → [N, C, H, W]
template <class S>
Var<S> from_tokens(const Var<S>& t, int h, int w) {
    return ag::reshape(ag::permute(t, {0, 2, 1}), {t.dim(0), t.dim(2), h, w});
}

} // namespace facepose::engine

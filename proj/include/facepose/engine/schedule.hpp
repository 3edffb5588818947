#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "facepose/errors.hpp"

namespace facepose::engine {

/// Linear-beta diffusion schedule; alpha_bar is the running product of (1 - beta).
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bar;

    int steps() const { return static_cast<int>(betas.size()); }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) fail(ErrorCode::BadSchedule, "T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        fail(ErrorCode::BadSchedule, "need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(s.betas.size());
    s.alpha_bar.resize(s.betas.size());
    double running = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.betas[static_cast<std::size_t>(t)] = beta;
        s.alphas[static_cast<std::size_t>(t)] = 1.0 - beta;
        running *= 1.0 - beta;
        s.alpha_bar[static_cast<std::size_t>(t)] = running;
    }
    return s;
}

/// Explicit-beta variant; used when a schedule is given as a table.
inline NoiseSchedule make_schedule(std::span<const double> betas) {
    if (betas.empty()) fail(ErrorCode::BadSchedule, "empty beta table");
    NoiseSchedule s;
    double running = 1.0;
    for (double b : betas) {
        if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::BadSchedule, "beta outside (0,1)");
        s.betas.push_back(b);
        s.alphas.push_back(1.0 - b);
        running *= 1.0 - b;
        s.alpha_bar.push_back(running);
    }
    return s;
}

/// x_t = √ab·x0 + √(1-ab)·eps, for an explicit cumulative alpha.
template <class S>
std::vector<S> add_noise_ab(std::span<const S> x0, std::span<const S> eps, double alpha_bar) {
    if (x0.size() != eps.size()) fail(ErrorCode::ShapeMismatch, "x0 and eps sizes differ");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<S> out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(a * x0[i] + b * eps[i]);
    return out;
}

template <class S>
std::vector<S> add_noise(std::span<const S> x0, std::span<const S> eps, int t, const NoiseSchedule& schedule) {
    if (t < 0 || t >= schedule.steps()) fail(ErrorCode::BadStep, "step " + std::to_string(t) + " outside [0, T)");
    return add_noise_ab(x0, eps, schedule.alpha_bar[static_cast<std::size_t>(t)]);
}

/// x0 estimate from a noisy sample and a noise prediction.
template <class S>
std::vector<S> predict_x0(std::span<const S> x_t, std::span<const S> eps_pred, double alpha_bar_t) {
    if (x_t.size() != eps_pred.size()) fail(ErrorCode::ShapeMismatch, "x_t and eps_pred sizes differ");
    const double sa = std::sqrt(alpha_bar_t), sb = std::sqrt(1.0 - alpha_bar_t);
    std::vector<S> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>((x_t[i] - sb * eps_pred[i]) / sa);
    return out;
}

/// Deterministic DDIM update between explicit cumulative alphas. With no
/// previous alpha (final step) the x0 estimate is returned.
template <class S>
std::vector<S> ddim_step_ab(std::span<const S> x_t, std::span<const S> eps_pred, double alpha_bar_t,
                            const double* alpha_bar_prev) {
    auto x0 = predict_x0(x_t, eps_pred, alpha_bar_t);
    if (!alpha_bar_prev) return x0;
    const double a = std::sqrt(*alpha_bar_prev), b = std::sqrt(1.0 - *alpha_bar_prev);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = static_cast<S>(a * x0[i] + b * eps_pred[i]);
    return x0;
}

/// t_prev = -1 marks the final step.
template <class S>
std::vector<S> ddim_step(std::span<const S> x_t, std::span<const S> eps_pred, int t, int t_prev,
                         const NoiseSchedule& schedule) {
    if (t < 0 || t >= schedule.steps()) fail(ErrorCode::BadStep, "step " + std::to_string(t) + " outside [0, T)");
    if (!(t > t_prev && t_prev >= -1)) fail(ErrorCode::BadStepOrder, "need t > t_prev >= -1");
    const double ab_t = schedule.alpha_bar[static_cast<std::size_t>(t)];
    if (t_prev < 0) return ddim_step_ab<S>(x_t, eps_pred, ab_t, nullptr);
    const double ab_prev = schedule.alpha_bar[static_cast<std::size_t>(t_prev)];
    return ddim_step_ab<S>(x_t, eps_pred, ab_t, &ab_prev);
}

/// Evenly spaced descending steps starting at T-1, e.g. T=1000, n=25 → 999, 959, …, 39.
inline std::vector<int> sampling_timesteps(int T, int n) {
    if (n < 1 || n > T) fail(ErrorCode::BadConfig, "sample_steps must be in [1, T]");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ts.push_back(T - 1 - static_cast<int>(static_cast<long long>(i) * T / n));
    return ts;
}

} // namespace facepose::engine

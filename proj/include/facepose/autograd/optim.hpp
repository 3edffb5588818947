#pragma once

#include <cmath>
#include <vector>

#include "facepose/autograd/var.hpp"

namespace facepose::ag {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

template <class S>
class Adam {
public:
    Adam(std::vector<Var<S>> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    /// Applies one update from the accumulated grads, then clears them.
    void step() {
        ++t_;
        double scale = 1.0;
        if (opts_.clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& p : params_)
                for (S g : p.grad()) sq += static_cast<double>(g) * g;
            const double norm = std::sqrt(sq);
            if (norm > opts_.clip_norm) scale = opts_.clip_norm / norm;
        }
        const double c1 = 1.0 - std::pow(opts_.beta1, t_);
        const double c2 = 1.0 - std::pow(opts_.beta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (p.grad().empty()) continue;
            auto& val = p.mutable_value();
            const auto& grad = p.grad();
            for (std::size_t j = 0; j < val.size(); ++j) {
                const double g = static_cast<double>(grad[j]) * scale;
                m_[i][j] = opts_.beta1 * m_[i][j] + (1.0 - opts_.beta1) * g;
                v_[i][j] = opts_.beta2 * v_[i][j] + (1.0 - opts_.beta2) * g * g;
                val[j] -= static_cast<S>(opts_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opts_.eps));
            }
            p.zero_grad();
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    long steps() const { return t_; }
    AdamOptions& options() { return opts_; }

private:
    std::vector<Var<S>> params_;
    AdamOptions opts_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

} // namespace facepose::ag

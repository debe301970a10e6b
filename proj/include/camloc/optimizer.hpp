#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "camloc/layers.hpp"

namespace camloc {

// Adam over a fixed parameter list. Parameter/gradient storage is owned
// by the layers; the optimizer keeps only its moment buffers. step()
// zeroes the gradients after applying the update, so callers accumulate
// fresh gradients for the next batch without an explicit clear.
template <class T = float>
class Adam {
public:
    explicit Adam(std::vector<ParamRef<T>> params, double lr = 1e-3,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
          eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].size, T(0));
            v_[i].assign(params_[i].size, T(0));
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            T* p = params_[i].value;
            T* g = params_[i].grad;
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (std::size_t j = 0; j < params_[i].size; ++j) {
                const double gj = g[j];
                const double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
                const double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                p[j] = static_cast<T>(p[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
                g[j] = T(0);
            }
        }
    }

    void zero_grad() {
        for (auto& pr : params_) {
            std::fill(pr.grad, pr.grad + pr.size, T(0));
        }
    }

    std::uint64_t steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    std::vector<ParamRef<T>> params_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

} // namespace camloc

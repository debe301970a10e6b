#pragma once

// Differentiable layer set for 1-D convolutional classifiers.
//
// Exactly the operations the ResNet needs: Conv1d (stride 1, zero
// same-padding), BatchNorm1d, ReLU, global average pooling, a linear
// head and softmax cross-entropy. Each layer caches what its backward
// pass needs when forward() runs with training=true; backward() then
// returns the gradient with respect to the layer input and accumulates
// parameter gradients in place.
//
// Convolution is cross-correlation (no kernel flip) so that feature-map
// timestamps align index-for-index with input timestamps. Even kernel
// sizes pad one extra zero on the right.
//
// Layers are not thread-safe individually; independent instances may be
// used from different threads concurrently.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "camloc/errors.hpp"
#include "camloc/rng.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

// View of one trainable array: value and gradient share one shape.
template <class T>
struct ParamRef {
    std::string name;
    T* value;
    T* grad;
    std::size_t size;
};

template <class T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T = float>
class Conv1d {
public:
    Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
           Rng& rng)
        : in_(in_channels), out_(out_channels), k_(kernel),
          weight_(out_channels, in_channels, kernel),
          weight_grad_(out_channels, in_channels, kernel),
          bias_(1, 1, out_channels), bias_grad_(1, 1, out_channels) {
        if (in_ == 0 || out_ == 0 || k_ == 0) {
            throw ConfigError("conv1d: channel counts and kernel must be positive");
        }
        const T bound = T(1) / std::sqrt(static_cast<T>(in_ * k_));
        weight_.fill_uniform(rng, -bound, bound);
        bias_.fill_uniform(rng, -bound, bound);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.channels() != in_) {
            throw DataError("conv1d: input has " + std::to_string(x.channels()) +
                            " channels, layer expects " + std::to_string(in_));
        }
        const std::size_t L = x.length();
        if (k_ > 2 * L + 1) {
            throw ConfigError("conv1d: kernel " + std::to_string(k_) +
                              " too large for input length " + std::to_string(L));
        }
        const std::size_t N = x.batch();
        Tensor<T> y(N, out_, L);
        col_.resize(in_ * k_ * L);
        Eigen::Map<const MatrixRM<T>> W(weight_.data(), out_, in_ * k_);
        for (std::size_t n = 0; n < N; ++n) {
            im2col(x, n);
            Eigen::Map<const MatrixRM<T>> col(col_.data(), in_ * k_, L);
            Eigen::Map<MatrixRM<T>> out(y.data() + n * out_ * L, out_, L);
            out.noalias() = W * col;
            for (std::size_t oc = 0; oc < out_; ++oc) {
                out.row(oc).array() += bias_(0, 0, oc);
            }
        }
        if (training) {
            cached_input_ = x;
            has_cache_ = true;
        } else {
            has_cache_ = false;
        }
        return y;
    }

    // Returns grad wrt input; adds this batch's contribution to the
    // weight/bias gradients.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_cache_) {
            throw StateError("conv1d: backward without a cached training forward");
        }
        const Tensor<T>& x = cached_input_;
        const std::size_t N = x.batch();
        const std::size_t L = x.length();
        if (grad_out.batch() != N || grad_out.channels() != out_ ||
            grad_out.length() != L) {
            throw DataError("conv1d: grad shape " + grad_out.shape_str() +
                            " does not match forward output");
        }
        Tensor<T> gx(N, in_, L);
        col_.resize(in_ * k_ * L);
        colg_.resize(in_ * k_ * L);
        Eigen::Map<const MatrixRM<T>> W(weight_.data(), out_, in_ * k_);
        Eigen::Map<MatrixRM<T>> gW(weight_grad_.data(), out_, in_ * k_);
        for (std::size_t n = 0; n < N; ++n) {
            Eigen::Map<const MatrixRM<T>> go(grad_out.data() + n * out_ * L, out_, L);
            im2col(x, n);
            Eigen::Map<const MatrixRM<T>> col(col_.data(), in_ * k_, L);
            gW.noalias() += go * col.transpose();
            // Fixed-order accumulation: vectorised reductions split at an
            // address-dependent alignment boundary, which makes the rounding
            // depend on where the buffer happens to live.
            for (std::size_t oc = 0; oc < out_; ++oc) {
                const T* g = grad_out.data() + (n * out_ + oc) * L;
                T s = T(0);
                for (std::size_t l = 0; l < L; ++l) s += g[l];
                bias_grad_(0, 0, oc) += s;
            }
            Eigen::Map<MatrixRM<T>> colg(colg_.data(), in_ * k_, L);
            colg.noalias() = W.transpose() * go;
            col2im(gx, n);
        }
        return gx;
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", weight_.data(), weight_grad_.data(),
                       weight_.size()});
        out.push_back({prefix + ".bias", bias_.data(), bias_grad_.data(),
                       bias_.size()});
    }

    std::size_t param_count() const { return weight_.size() + bias_.size(); }
    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }
    std::size_t kernel() const { return k_; }
    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

private:
    std::size_t pad_left() const { return (k_ - 1) / 2; }

    void im2col(const Tensor<T>& x, std::size_t n) {
        const std::size_t L = x.length();
        const std::size_t pl = pad_left();
        for (std::size_t ic = 0; ic < in_; ++ic) {
            const T* src = x.data() + (n * in_ + ic) * L;
            for (std::size_t kk = 0; kk < k_; ++kk) {
                T* row = col_.data() + (ic * k_ + kk) * L;
                // output position l reads input position l + kk - pad_left
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(pl);
                const std::size_t l0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t l1 = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
                std::fill(row, row + l0, T(0));
                if (l1 > l0) {
                    std::memcpy(row + l0, src + (static_cast<std::ptrdiff_t>(l0) + shift),
                                (l1 - l0) * sizeof(T));
                }
                std::fill(row + l1, row + L, T(0));
            }
        }
    }

    void col2im(Tensor<T>& gx, std::size_t n) {
        const std::size_t L = gx.length();
        const std::size_t pl = pad_left();
        for (std::size_t ic = 0; ic < in_; ++ic) {
            T* dst = gx.data() + (n * in_ + ic) * L;
            for (std::size_t kk = 0; kk < k_; ++kk) {
                const T* row = colg_.data() + (ic * k_ + kk) * L;
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(pl);
                const std::size_t l0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t l1 = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
                for (std::size_t l = l0; l < l1; ++l) {
                    dst[static_cast<std::ptrdiff_t>(l) + shift] += row[l];
                }
            }
        }
    }

    std::size_t in_, out_, k_;
    Tensor<T> weight_, weight_grad_;
    Tensor<T> bias_, bias_grad_;
    Tensor<T> cached_input_;
    bool has_cache_ = false;
    std::vector<T> col_, colg_;
};

template <class T = float>
class BatchNorm1d {
public:
    explicit BatchNorm1d(std::size_t channels, T eps = T(1e-5), T momentum = T(0.1))
        : c_(channels), eps_(eps), momentum_(momentum),
          gamma_(1, 1, channels), gamma_grad_(1, 1, channels),
          beta_(1, 1, channels), beta_grad_(1, 1, channels),
          running_mean_(1, 1, channels), running_var_(1, 1, channels) {
        gamma_.fill(T(1));
        running_var_.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.channels() != c_) {
            throw DataError("batchnorm: input has " + std::to_string(x.channels()) +
                            " channels, layer expects " + std::to_string(c_));
        }
        return training ? forward_train(x) : forward_eval(x);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_cache_) {
            throw StateError("batchnorm: backward without a cached training forward");
        }
        const std::size_t N = xhat_.batch();
        const std::size_t L = xhat_.length();
        if (!grad_out.same_shape(xhat_)) {
            throw DataError("batchnorm: grad shape " + grad_out.shape_str() +
                            " does not match forward output");
        }
        const double m = static_cast<double>(N * L);
        Tensor<T> gx(N, c_, L);
        for (std::size_t c = 0; c < c_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* dy = grad_out.data() + (n * c_ + c) * L;
                const T* xh = xhat_.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    sum_dy += dy[l];
                    sum_dy_xhat += static_cast<double>(dy[l]) * xh[l];
                }
            }
            gamma_grad_(0, 0, c) += static_cast<T>(sum_dy_xhat);
            beta_grad_(0, 0, c) += static_cast<T>(sum_dy);
            const double scale = static_cast<double>(gamma_(0, 0, c)) * inv_std_[c];
            const double mean_dy = sum_dy / m;
            const double mean_dy_xhat = sum_dy_xhat / m;
            for (std::size_t n = 0; n < N; ++n) {
                const T* dy = grad_out.data() + (n * c_ + c) * L;
                const T* xh = xhat_.data() + (n * c_ + c) * L;
                T* g = gx.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    g[l] = static_cast<T>(scale * (dy[l] - mean_dy - xh[l] * mean_dy_xhat));
                }
            }
        }
        return gx;
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", gamma_.data(), gamma_grad_.data(),
                       gamma_.size()});
        out.push_back({prefix + ".beta", beta_.data(), beta_grad_.data(),
                       beta_.size()});
    }

    std::size_t param_count() const { return gamma_.size() + beta_.size(); }
    Tensor<T>& gamma() { return gamma_; }
    Tensor<T>& beta() { return beta_; }
    Tensor<T>& running_mean() { return running_mean_; }
    Tensor<T>& running_var() { return running_var_; }
    bool stats_initialized() const { return stats_initialized_; }
    void mark_stats_initialized() { stats_initialized_ = true; }

private:
    Tensor<T> forward_train(const Tensor<T>& x) {
        const std::size_t N = x.batch();
        const std::size_t L = x.length();
        const double m = static_cast<double>(N * L);
        if (N * L == 0) {
            throw DataError("batchnorm: empty input");
        }
        Tensor<T> y(N, c_, L);
        xhat_ = Tensor<T>(N, c_, L);
        inv_std_.assign(c_, 0.0);
        for (std::size_t c = 0; c < c_; ++c) {
            double sum = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* px = x.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) sum += px[l];
            }
            const double mean = sum / m;
            double ss = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* px = x.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    const double d = px[l] - mean;
                    ss += d * d;
                }
            }
            const double var_biased = ss / m;
            const double var_unbiased = m > 1.0 ? ss / (m - 1.0) : var_biased;
            const double istd = 1.0 / std::sqrt(var_biased + static_cast<double>(eps_));
            inv_std_[c] = istd;
            const double g = gamma_(0, 0, c);
            const double b = beta_(0, 0, c);
            for (std::size_t n = 0; n < N; ++n) {
                const T* px = x.data() + (n * c_ + c) * L;
                T* ph = xhat_.data() + (n * c_ + c) * L;
                T* py = y.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    const double h = (px[l] - mean) * istd;
                    ph[l] = static_cast<T>(h);
                    py[l] = static_cast<T>(g * h + b);
                }
            }
            running_mean_(0, 0, c) = static_cast<T>(
                (1.0 - momentum_) * running_mean_(0, 0, c) + momentum_ * mean);
            running_var_(0, 0, c) = static_cast<T>(
                (1.0 - momentum_) * running_var_(0, 0, c) + momentum_ * var_unbiased);
        }
        stats_initialized_ = true;
        has_cache_ = true;
        return y;
    }

    Tensor<T> forward_eval(const Tensor<T>& x) {
        if (!stats_initialized_) {
            throw StateError("batchnorm: eval mode before any training batch "
                             "initialized the running statistics");
        }
        const std::size_t N = x.batch();
        const std::size_t L = x.length();
        Tensor<T> y(N, c_, L);
        for (std::size_t c = 0; c < c_; ++c) {
            const double istd =
                1.0 / std::sqrt(static_cast<double>(running_var_(0, 0, c)) +
                                static_cast<double>(eps_));
            const double g = gamma_(0, 0, c);
            const double b = beta_(0, 0, c);
            const double mean = running_mean_(0, 0, c);
            for (std::size_t n = 0; n < N; ++n) {
                const T* px = x.data() + (n * c_ + c) * L;
                T* py = y.data() + (n * c_ + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    py[l] = static_cast<T>(g * (px[l] - mean) * istd + b);
                }
            }
        }
        has_cache_ = false;
        return y;
    }

    std::size_t c_;
    T eps_, momentum_;
    Tensor<T> gamma_, gamma_grad_, beta_, beta_grad_;
    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
    bool stats_initialized_ = false;
    bool has_cache_ = false;
};

template <class T = float>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> y(x.batch(), x.channels(), x.length());
        const T* px = x.data();
        T* py = y.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            py[i] = px[i] > T(0) ? px[i] : T(0);
        }
        if (training) {
            cached_input_ = x;
            has_cache_ = true;
        } else {
            has_cache_ = false;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_cache_) {
            throw StateError("relu: backward without a cached training forward");
        }
        if (!grad_out.same_shape(cached_input_)) {
            throw DataError("relu: grad shape mismatch");
        }
        Tensor<T> gx(grad_out.batch(), grad_out.channels(), grad_out.length());
        const T* px = cached_input_.data();
        const T* pg = grad_out.data();
        T* po = gx.data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            po[i] = px[i] > T(0) ? pg[i] : T(0);
        }
        return gx;
    }

private:
    Tensor<T> cached_input_;
    bool has_cache_ = false;
};

// (B, C, L) -> (B, C, 1), mean over the temporal axis.
template <class T = float>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.length() == 0) {
            throw DataError("global_average_pool: empty temporal axis");
        }
        const std::size_t N = x.batch(), C = x.channels(), L = x.length();
        Tensor<T> y(N, C, 1);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const T* px = x.data() + (n * C + c) * L;
                double sum = 0.0;
                for (std::size_t l = 0; l < L; ++l) sum += px[l];
                y(n, c, 0) = static_cast<T>(sum / static_cast<double>(L));
            }
        }
        if (training) {
            in_length_ = L;
            has_cache_ = true;
        } else {
            has_cache_ = false;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_cache_) {
            throw StateError("global_average_pool: backward without training forward");
        }
        const std::size_t N = grad_out.batch(), C = grad_out.channels();
        const std::size_t L = in_length_;
        Tensor<T> gx(N, C, L);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const T g = grad_out(n, c, 0) / static_cast<T>(L);
                T* po = gx.data() + (n * C + c) * L;
                for (std::size_t l = 0; l < L; ++l) po[l] = g;
            }
        }
        return gx;
    }

private:
    std::size_t in_length_ = 0;
    bool has_cache_ = false;
};

// Fully connected map over (B, F, 1) tensors: out[b,o] = W[o,:]·in[b,:] + bias[o].
template <class T = float>
class Linear {
public:
    Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
        : in_(in_features), out_(out_features),
          weight_(1, out_features, in_features),
          weight_grad_(1, out_features, in_features),
          bias_(1, 1, out_features), bias_grad_(1, 1, out_features) {
        const T bound = T(1) / std::sqrt(static_cast<T>(in_));
        weight_.fill_uniform(rng, -bound, bound);
        bias_.fill_uniform(rng, -bound, bound);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.channels() * x.length() != in_) {
            throw DataError("linear: input features " +
                            std::to_string(x.channels() * x.length()) +
                            ", layer expects " + std::to_string(in_));
        }
        const std::size_t N = x.batch();
        Tensor<T> y(N, out_, 1);
        Eigen::Map<const MatrixRM<T>> X(x.data(), N, in_);
        Eigen::Map<const MatrixRM<T>> W(weight_.data(), out_, in_);
        Eigen::Map<MatrixRM<T>> Y(y.data(), N, out_);
        Y.noalias() = X * W.transpose();
        for (std::size_t o = 0; o < out_; ++o) {
            Y.col(o).array() += bias_(0, 0, o);
        }
        if (training) {
            cached_input_ = x;
            has_cache_ = true;
        } else {
            has_cache_ = false;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_cache_) {
            throw StateError("linear: backward without a cached training forward");
        }
        const std::size_t N = cached_input_.batch();
        if (grad_out.batch() != N || grad_out.channels() * grad_out.length() != out_) {
            throw DataError("linear: grad shape mismatch");
        }
        Tensor<T> gx(N, cached_input_.channels(), cached_input_.length());
        Eigen::Map<const MatrixRM<T>> X(cached_input_.data(), N, in_);
        Eigen::Map<const MatrixRM<T>> GO(grad_out.data(), N, out_);
        Eigen::Map<const MatrixRM<T>> W(weight_.data(), out_, in_);
        Eigen::Map<MatrixRM<T>> GW(weight_grad_.data(), out_, in_);
        Eigen::Map<MatrixRM<T>> GX(gx.data(), N, in_);
        GW.noalias() += GO.transpose() * X;
        // Fixed-order accumulation, see the conv bias note.
        for (std::size_t o = 0; o < out_; ++o) {
            T s = T(0);
            for (std::size_t n = 0; n < N; ++n) s += grad_out.data()[n * out_ + o];
            bias_grad_(0, 0, o) += s;
        }
        GX.noalias() = GO * W;
        return gx;
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", weight_.data(), weight_grad_.data(),
                       weight_.size()});
        out.push_back({prefix + ".bias", bias_.data(), bias_grad_.data(),
                       bias_.size()});
    }

    std::size_t param_count() const { return weight_.size() + bias_.size(); }
    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

private:
    std::size_t in_, out_;
    Tensor<T> weight_, weight_grad_;
    Tensor<T> bias_, bias_grad_;
    Tensor<T> cached_input_;
    bool has_cache_ = false;
};

// Row-wise softmax over (B, K, 1) logits.
template <class T>
Tensor<T> softmax_probs(const Tensor<T>& logits) {
    const std::size_t N = logits.batch();
    const std::size_t K = logits.channels() * logits.length();
    Tensor<T> probs(N, logits.channels(), logits.length());
    for (std::size_t n = 0; n < N; ++n) {
        const T* pl = logits.data() + n * K;
        T* pp = probs.data() + n * K;
        double mx = pl[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, pl[k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(pl[k] - mx);
        for (std::size_t k = 0; k < K; ++k) {
            pp[k] = static_cast<T>(std::exp(pl[k] - mx) / denom);
        }
    }
    return probs;
}

// Mean negative log-likelihood of integer labels under row-wise softmax.
// forward() returns the loss and keeps the probabilities; backward()
// returns dL/dlogits = (probs - onehot)/B.
template <class T = float>
class SoftmaxCrossEntropy {
public:
    double forward(const Tensor<T>& logits, const std::vector<int>& labels) {
        const std::size_t N = logits.batch();
        const std::size_t K = logits.channels() * logits.length();
        if (labels.size() != N) {
            throw DataError("cross-entropy: " + std::to_string(labels.size()) +
                            " labels for batch of " + std::to_string(N));
        }
        for (int lab : labels) {
            if (lab < 0 || static_cast<std::size_t>(lab) >= K) {
                throw DataError("cross-entropy: label " + std::to_string(lab) +
                                " outside [0," + std::to_string(K) + ")");
            }
        }
        probs_ = softmax_probs(logits);
        labels_ = labels;
        double loss = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const T* pl = logits.data() + n * K;
            double mx = pl[0];
            for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, pl[k]);
            double denom = 0.0;
            for (std::size_t k = 0; k < K; ++k) denom += std::exp(pl[k] - mx);
            loss += std::log(denom) + mx - pl[labels[n]];
        }
        has_cache_ = true;
        return loss / static_cast<double>(N);
    }

    Tensor<T> backward() const {
        if (!has_cache_) {
            throw StateError("cross-entropy: backward before forward");
        }
        const std::size_t N = probs_.batch();
        const std::size_t K = probs_.channels() * probs_.length();
        Tensor<T> g(probs_.batch(), probs_.channels(), probs_.length());
        for (std::size_t n = 0; n < N; ++n) {
            const T* pp = probs_.data() + n * K;
            T* pg = g.data() + n * K;
            for (std::size_t k = 0; k < K; ++k) {
                const T onehot = (static_cast<std::size_t>(labels_[n]) == k) ? T(1) : T(0);
                pg[k] = (pp[k] - onehot) / static_cast<T>(N);
            }
        }
        return g;
    }

    const Tensor<T>& probs() const { return probs_; }

private:
    Tensor<T> probs_;
    std::vector<int> labels_;
    bool has_cache_ = false;
};

} // namespace camloc

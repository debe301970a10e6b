#pragma once

// 1-D residual network for binary window classification.
//
// Architecture: 3 stacked residual blocks with {64, 128, 128} filters.
// Each residual block runs 3 conv blocks (conv -> batchnorm -> ReLU),
// every conv sharing the network's single kernel size; the block input
// is added back after the third conv block (projected through a 1x1
// conv + batchnorm when channel counts differ), with no activation
// after the addition. Head: global average pooling over time, then a
// linear map to 2 classes and softmax.
//
// The post-addition output of the last block is exposed as the
// network's feature maps. Because the head is GAP + linear, the class
// activation map cam(c, t) = sum_k w[c,k] * feature[k, t] satisfies
// (1/L) * sum_t cam(c, t) + bias[c] == logit[c], which ties per-timestamp
// relevance directly to the window-level decision.

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "camloc/errors.hpp"
#include "camloc/layers.hpp"
#include "camloc/rng.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

struct ResNetSpec {
    std::size_t kernel_size = 7;
    std::array<std::size_t, 3> filters{64, 128, 128};
    std::size_t num_classes = 2;
    std::size_t input_channels = 1;

    void validate() const {
        if (kernel_size < 1) {
            throw ConfigError("resnet spec: kernel_size must be >= 1");
        }
        if (num_classes < 2) {
            throw ConfigError("resnet spec: num_classes must be >= 2");
        }
        if (input_channels < 1) {
            throw ConfigError("resnet spec: input_channels must be >= 1");
        }
        for (std::size_t f : filters) {
            if (f < 1) throw ConfigError("resnet spec: filters must be >= 1");
        }
    }

    bool operator==(const ResNetSpec&) const = default;
};

// Named non-trainable array (batchnorm running statistics).
template <class T>
struct BufferRef {
    std::string name;
    T* value;
    std::size_t size;
};

namespace detail {

template <class T>
struct ConvBlock {
    Conv1d<T> conv;
    BatchNorm1d<T> bn;
    ReLU<T> relu;

    ConvBlock(std::size_t in_ch, std::size_t out_ch, std::size_t k, Rng& rng)
        : conv(in_ch, out_ch, k, rng), bn(out_ch) {}

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return relu.forward(bn.forward(conv.forward(x, training), training), training);
    }

    Tensor<T> backward(const Tensor<T>& g) {
        return conv.backward(bn.backward(relu.backward(g)));
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        conv.collect_params(out, prefix + ".conv");
        bn.collect_params(out, prefix + ".bn");
    }
};

template <class T>
struct ResidualBlock {
    ConvBlock<T> cb1, cb2, cb3;
    std::unique_ptr<Conv1d<T>> proj_conv;
    std::unique_ptr<BatchNorm1d<T>> proj_bn;

    ResidualBlock(std::size_t in_ch, std::size_t out_ch, std::size_t k, Rng& rng)
        : cb1(in_ch, out_ch, k, rng),
          cb2(out_ch, out_ch, k, rng),
          cb3(out_ch, out_ch, k, rng) {
        if (in_ch != out_ch) {
            proj_conv = std::make_unique<Conv1d<T>>(in_ch, out_ch, 1, rng);
            proj_bn = std::make_unique<BatchNorm1d<T>>(out_ch);
        }
    }

    Tensor<T> shortcut(const Tensor<T>& x, bool training) {
        if (!proj_conv) return x;
        return proj_bn->forward(proj_conv->forward(x, training), training);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> main = cb3.forward(cb2.forward(cb1.forward(x, training), training),
                                     training);
        Tensor<T> sc = shortcut(x, training);
        T* pm = main.data();
        const T* ps = sc.data();
        for (std::size_t i = 0; i < main.size(); ++i) pm[i] += ps[i];
        return main;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        Tensor<T> g_main = cb1.backward(cb2.backward(cb3.backward(g)));
        if (!proj_conv) {
            T* pm = g_main.data();
            const T* pg = g.data();
            for (std::size_t i = 0; i < g_main.size(); ++i) pm[i] += pg[i];
            return g_main;
        }
        Tensor<T> g_sc = proj_conv->backward(proj_bn->backward(g));
        T* pm = g_main.data();
        const T* ps = g_sc.data();
        for (std::size_t i = 0; i < g_main.size(); ++i) pm[i] += ps[i];
        return g_main;
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        cb1.collect_params(out, prefix + ".cb1");
        cb2.collect_params(out, prefix + ".cb2");
        cb3.collect_params(out, prefix + ".cb3");
        if (proj_conv) {
            proj_conv->collect_params(out, prefix + ".proj.conv");
            proj_bn->collect_params(out, prefix + ".proj.bn");
        }
    }
};

} // namespace detail

template <class T = float>
class ResNet {
public:
    struct ForwardResult {
        Tensor<T> probs;    // (B, num_classes, 1)
        Tensor<T> logits;   // (B, num_classes, 1)
        Tensor<T> features; // (B, last_filters, L) -- GAP input
    };

    ResNet(const ResNetSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
        spec.validate();
        Rng rng = Rng::child(seed, 0x6d6f64656cULL);
        blocks_.reserve(3);
        std::size_t in_ch = spec.input_channels;
        for (std::size_t b = 0; b < 3; ++b) {
            blocks_.push_back(std::make_unique<detail::ResidualBlock<T>>(
                in_ch, spec.filters[b], spec.kernel_size, rng));
            in_ch = spec.filters[b];
        }
        head_ = std::make_unique<Linear<T>>(in_ch, spec.num_classes, rng);
    }

    ForwardResult forward(const Tensor<T>& x, bool training) {
        if (x.channels() != spec_.input_channels) {
            throw DataError("resnet: input has " + std::to_string(x.channels()) +
                            " channels, expected " +
                            std::to_string(spec_.input_channels));
        }
        if (x.length() < 1) {
            throw DataError("resnet: empty temporal axis");
        }
        ForwardResult r;
        Tensor<T> h = x;
        for (auto& b : blocks_) h = b->forward(h, training);
        r.features = std::move(h);
        Tensor<T> pooled = gap_.forward(r.features, training);
        r.logits = head_->forward(pooled, training);
        r.probs = softmax_probs(r.logits);
        return r;
    }

    // Forward plus cross-entropy; retains every cache needed by backward().
    double loss_forward(const Tensor<T>& x, const std::vector<int>& labels,
                        bool training = true) {
        ForwardResult r = forward(x, training);
        return xent_.forward(r.logits, labels);
    }

    // Backpropagates from the last loss_forward(training=true) call and
    // accumulates parameter gradients.
    void backward() {
        Tensor<T> g = head_->backward(xent_.backward());
        g = gap_.backward(g);
        for (std::size_t b = blocks_.size(); b > 0; --b) {
            g = blocks_[b - 1]->backward(g);
        }
    }

    // cam(b, 0, t) = sum_k w[class_id, k] * features(b, k, t); classifier
    // bias excluded.
    Tensor<T> cam(const Tensor<T>& features, std::size_t class_id) {
        if (class_id >= spec_.num_classes) {
            throw DataError("cam: class " + std::to_string(class_id) +
                            " out of range");
        }
        const std::size_t C = spec_.filters[2];
        if (features.channels() != C) {
            throw DataError("cam: features have " +
                            std::to_string(features.channels()) +
                            " channels, classifier expects " + std::to_string(C));
        }
        const std::size_t N = features.batch();
        const std::size_t L = features.length();
        Tensor<T> out(N, 1, L);
        Tensor<T>& W = head_->weight(); // (1, num_classes, C)
        for (std::size_t n = 0; n < N; ++n) {
            T* po = out.data() + n * L;
            for (std::size_t k = 0; k < C; ++k) {
                const T w = W(0, class_id, k);
                const T* pf = features.data() + (n * C + k) * L;
                for (std::size_t l = 0; l < L; ++l) po[l] += w * pf[l];
            }
        }
        return out;
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            blocks_[b]->collect_params(out, "block" + std::to_string(b + 1));
        }
        head_->collect_params(out, "head");
        return out;
    }

    std::vector<BufferRef<T>> buffers() {
        std::vector<BufferRef<T>> out;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "block" + std::to_string(b + 1);
            auto add_bn = [&](BatchNorm1d<T>& bn, const std::string& name) {
                out.push_back({name + ".running_mean", bn.running_mean().data(),
                               bn.running_mean().size()});
                out.push_back({name + ".running_var", bn.running_var().data(),
                               bn.running_var().size()});
            };
            add_bn(blocks_[b]->cb1.bn, p + ".cb1.bn");
            add_bn(blocks_[b]->cb2.bn, p + ".cb2.bn");
            add_bn(blocks_[b]->cb3.bn, p + ".cb3.bn");
            if (blocks_[b]->proj_bn) add_bn(*blocks_[b]->proj_bn, p + ".proj.bn");
        }
        return out;
    }

    std::size_t param_count() {
        std::size_t total = 0;
        for (const auto& pr : params()) total += pr.size;
        return total;
    }

    bool bn_stats_initialized() const {
        for (const auto& b : blocks_) {
            if (!b->cb1.bn.stats_initialized()) return false;
            if (!b->cb2.bn.stats_initialized()) return false;
            if (!b->cb3.bn.stats_initialized()) return false;
            if (b->proj_bn && !b->proj_bn->stats_initialized()) return false;
        }
        return true;
    }

    void mark_bn_stats_initialized() {
        for (auto& b : blocks_) {
            b->cb1.bn.mark_stats_initialized();
            b->cb2.bn.mark_stats_initialized();
            b->cb3.bn.mark_stats_initialized();
            if (b->proj_bn) b->proj_bn->mark_stats_initialized();
        }
    }

    const ResNetSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    Linear<T>& head() { return *head_; }
    detail::ResidualBlock<T>& block(std::size_t i) { return *blocks_.at(i); }

    std::uint64_t epochs_run = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();

private:
    ResNetSpec spec_;
    std::uint64_t seed_;
    std::vector<std::unique_ptr<detail::ResidualBlock<T>>> blocks_;
    GlobalAvgPool<T> gap_;
    std::unique_ptr<Linear<T>> head_;
    SoftmaxCrossEntropy<T> xent_;
};

} // namespace camloc

#pragma once

// Minimal dense tensor for 1-D convolutional networks.
//
// Tensor<T> is a rank-3 array with fixed axis meaning (batch, channel,
// time), stored row-major as batch-major contiguous memory. Rank-1 and
// rank-2 uses (bias vectors, weight matrices) are expressed by setting
// the unused leading dimensions to 1; the layers give their own meaning
// to the axes they use.

#include <cstddef>
#include <string>
#include <vector>

#include "camloc/errors.hpp"
#include "camloc/rng.hpp"

namespace camloc {

template <class T = float>
class Tensor {
public:
    using value_type = T;

    Tensor() : n_(0), c_(0), l_(0) {}

    Tensor(std::size_t n, std::size_t c, std::size_t l)
        : n_(n), c_(c), l_(l), data_(n * c * l, T(0)) {}

    static Tensor zeros(std::size_t n, std::size_t c, std::size_t l) {
        return Tensor(n, c, l);
    }

    static Tensor full(std::size_t n, std::size_t c, std::size_t l, T value) {
        Tensor t(n, c, l);
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor from_vector(std::size_t n, std::size_t c, std::size_t l,
                              const std::vector<T>& values) {
        if (values.size() != n * c * l) {
            throw DataError("tensor init: " + std::to_string(values.size()) +
                            " values for shape (" + std::to_string(n) + "," +
                            std::to_string(c) + "," + std::to_string(l) + ")");
        }
        Tensor t(n, c, l);
        t.data_ = values;
        return t;
    }

    std::size_t batch() const { return n_; }
    std::size_t channels() const { return c_; }
    std::size_t length() const { return l_; }
    std::size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator()(std::size_t n, std::size_t c, std::size_t l) {
        return data_[(n * c_ + c) * l_ + l];
    }
    T operator()(std::size_t n, std::size_t c, std::size_t l) const {
        return data_[(n * c_ + c) * l_ + l];
    }

    T& at(std::size_t n, std::size_t c, std::size_t l) {
        check_index(n, c, l);
        return (*this)(n, c, l);
    }
    T at(std::size_t n, std::size_t c, std::size_t l) const {
        check_index(n, c, l);
        return (*this)(n, c, l);
    }

    bool same_shape(const Tensor& o) const {
        return n_ == o.n_ && c_ == o.c_ && l_ == o.l_;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    void fill_normal(Rng& rng, T mean, T stddev) {
        for (auto& v : data_) v = static_cast<T>(rng.normal(mean, stddev));
    }

    void fill_uniform(Rng& rng, T lo, T hi) {
        for (auto& v : data_) v = static_cast<T>(rng.uniform(lo, hi));
    }

    std::string shape_str() const {
        return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," +
               std::to_string(l_) + ")";
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(n_, c_, l_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.vec()[i] = static_cast<U>(data_[i]);
        }
        return out;
    }

private:
    void check_index(std::size_t n, std::size_t c, std::size_t l) const {
        if (n >= n_ || c >= c_ || l >= l_) {
            throw DataError("tensor index (" + std::to_string(n) + "," +
                            std::to_string(c) + "," + std::to_string(l) +
                            ") out of range for shape " + shape_str());
        }
    }

    std::size_t n_, c_, l_;
    std::vector<T> data_;
};

} // namespace camloc

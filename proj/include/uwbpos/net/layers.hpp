// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

// Layers with explicit backpropagation. Each layer processes one sample at
// a time; `forward` caches what `backward` needs and `apply` is the
// cache-free path used for inference on a shared network.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/error.hpp"
#include "uwbpos/net/tensor.hpp"
#include "uwbpos/rng.hpp"

namespace uwbpos::net {

enum class LayerKind { Conv1d, Relu, FullyConnected, ParallelSum, Flatten, Sequential };

inline std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::Relu: return "relu";
        case LayerKind::FullyConnected: return "fully_connected";
        case LayerKind::ParallelSum: return "parallel_sum";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Sequential: return "sequential";
    }
    return "unknown";
}

template <class T>
struct ParamRef {
    std::span<T> value;
    std::span<T> grad;
    std::size_t fan_in = 1;
    bool is_bias = false;
};

template <class T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor<T> apply(const Tensor<T>& in) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& in) = 0;
    // Accumulates parameter gradients and returns the input gradient.
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::vector<ParamRef<T>> params() { return {}; }
    virtual std::unique_ptr<Layer<T>> clone() const = 0;
    virtual void clear_cache() {}
};

template <class T>
using LayerPtr = std::unique_ptr<Layer<T>>;

namespace detail {

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc{0};
#pragma omp simd reduction(+ : acc)
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

// Leaf layers keep a copy of their last input.
template <class T>
class CachingLayer : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& in) override {
        cache_ = in;
        has_cache_ = true;
        return this->apply(in);
    }
    void clear_cache() override { has_cache_ = false; }

protected:
    const Tensor<T>& cached(const char* who) const {
        if (!has_cache_) throw Error(ErrorCode::NoForwardCache, std::string(who) + " backward before forward");
        return cache_;
    }

    Tensor<T> cache_;
    bool has_cache_ = false;
};

// Same-length 1D convolution with stride 1 and symmetric zero padding:
// out[o, n] = bias[o] + sum_{i,k} w[o, i, k] * in[i, n + k - kernel/2].
template <class T>
class Conv1d final : public CachingLayer<T> {
public:
    Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel = 5)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
          w_(in_ch * out_ch * kernel, T{0}), b_(out_ch, T{0}), gw_(w_.size(), T{0}), gb_(b_.size(), T{0}) {
        require(in_ch >= 1 && out_ch >= 1, ErrorCode::InvalidArgument, "conv channels must be >= 1");
        require(kernel % 2 == 1, ErrorCode::InvalidArgument, "conv kernel must be odd");
    }

    LayerKind kind() const override { return LayerKind::Conv1d; }
    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }
    std::size_t kernel() const { return kernel_; }
    std::vector<T>& weight() { return w_; }
    std::vector<T>& bias() { return b_; }
    const std::vector<T>& weight() const { return w_; }
    const std::vector<T>& bias() const { return b_; }

    T& w(std::size_t o, std::size_t i, std::size_t k) { return w_[(o * in_ch_ + i) * kernel_ + k]; }

    Shape output_shape(const Shape& in) const override {
        check(in);
        return {out_ch_, in[1]};
    }

    Tensor<T> apply(const Tensor<T>& in) const override {
        check(in.shape);
        const std::size_t len = in.length();
        const auto half = static_cast<std::ptrdiff_t>(kernel_ / 2);
        Tensor<T> out({out_ch_, len});
        for (std::size_t o = 0; o < out_ch_; ++o) {
            T* dst = out.row(o);
            std::fill(dst, dst + len, b_[o]);
            for (std::size_t i = 0; i < in_ch_; ++i) {
                const T* src = in.row(i);
                for (std::size_t k = 0; k < kernel_; ++k) {
                    const auto off = static_cast<std::ptrdiff_t>(k) - half;
                    const auto [lo, hi] = valid_range(off, len);
                    if (lo >= hi) continue;
                    detail::axpy(w_[(o * in_ch_ + i) * kernel_ + k], src + lo + off, dst + lo, hi - lo);
                }
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T>& in = this->cached("conv1d");
        require(grad_out.shape == output_shape(in.shape), ErrorCode::ShapeMismatch, "conv1d gradient shape");
        const std::size_t len = in.length();
        const auto half = static_cast<std::ptrdiff_t>(kernel_ / 2);
        Tensor<T> grad_in(in.shape);
        for (std::size_t o = 0; o < out_ch_; ++o) {
            const T* g = grad_out.row(o);
            T acc{0};
            for (std::size_t n = 0; n < len; ++n) acc += g[n];
            gb_[o] += acc;
            for (std::size_t i = 0; i < in_ch_; ++i) {
                const T* src = in.row(i);
                T* gi = grad_in.row(i);
                for (std::size_t k = 0; k < kernel_; ++k) {
                    const auto off = static_cast<std::ptrdiff_t>(k) - half;
                    const auto [lo, hi] = valid_range(off, len);
                    if (lo >= hi) continue;
                    const std::size_t idx = (o * in_ch_ + i) * kernel_ + k;
                    gw_[idx] += detail::dot(g + lo, src + lo + off, hi - lo);
                    detail::axpy(w_[idx], g + lo, gi + lo + off, hi - lo);
                }
            }
        }
        return grad_in;
    }

    std::vector<ParamRef<T>> params() override {
        return {{w_, gw_, in_ch_ * kernel_, false}, {b_, gb_, in_ch_ * kernel_, true}};
    }

    LayerPtr<T> clone() const override { return std::make_unique<Conv1d>(*this); }

private:
    void check(const Shape& in) const {
        require(in.size() == 2 && in[0] == in_ch_ && in[1] >= 1, ErrorCode::ShapeMismatch,
                "conv1d expects (" + std::to_string(in_ch_) + ", length) but got " + shape_string(in));
    }

    // Output positions n whose input index n + off lies inside [0, len).
    static std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t off, std::size_t len) {
        const auto l = static_cast<std::ptrdiff_t>(len);
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(l, l - off);
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
    }

    std::size_t in_ch_, out_ch_, kernel_;
    std::vector<T> w_, b_, gw_, gb_;
};

template <class T>
class Relu final : public CachingLayer<T> {
public:
    LayerKind kind() const override { return LayerKind::Relu; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> apply(const Tensor<T>& in) const override {
        Tensor<T> out = in;
        for (T& v : out.data) v = std::max(v, T{0});
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T>& in = this->cached("relu");
        require(grad_out.size() == in.size(), ErrorCode::ShapeMismatch, "relu gradient shape");
        Tensor<T> g = grad_out;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(in.data[i] > T{0})) g.data[i] = T{0};
        }
        return g;
    }

    LayerPtr<T> clone() const override { return std::make_unique<Relu>(*this); }
};

template <class T>
class Flatten final : public CachingLayer<T> {
public:
    LayerKind kind() const override { return LayerKind::Flatten; }
    Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }

    Tensor<T> apply(const Tensor<T>& in) const override { return Tensor<T>({in.size()}, in.data); }

    Tensor<T> forward(const Tensor<T>& in) override {
        in_shape_ = in.shape;
        this->has_cache_ = true;
        return apply(in);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        if (!this->has_cache_) throw Error(ErrorCode::NoForwardCache, "flatten backward before forward");
        return Tensor<T>(in_shape_, grad_out.data);
    }

    LayerPtr<T> clone() const override { return std::make_unique<Flatten>(*this); }

private:
    Shape in_shape_;
};

// y = W x + b on the flattened input; W is (out_dim, in_dim) row-major.
template <class T>
class FullyConnected final : public CachingLayer<T> {
public:
    FullyConnected(std::size_t in_dim, std::size_t out_dim)
        : in_dim_(in_dim), out_dim_(out_dim), w_(in_dim * out_dim, T{0}), b_(out_dim, T{0}),
          gw_(w_.size(), T{0}), gb_(out_dim, T{0}) {
        require(in_dim >= 1 && out_dim >= 1, ErrorCode::InvalidArgument, "fc dimensions must be >= 1");
    }

    LayerKind kind() const override { return LayerKind::FullyConnected; }
    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }
    std::vector<T>& weight() { return w_; }
    std::vector<T>& bias() { return b_; }
    const std::vector<T>& weight() const { return w_; }
    const std::vector<T>& bias() const { return b_; }

    Shape output_shape(const Shape& in) const override {
        require(shape_size(in) == in_dim_, ErrorCode::ShapeMismatch,
                "fully_connected expects " + std::to_string(in_dim_) + " inputs but got " + shape_string(in));
        return {out_dim_};
    }

    Tensor<T> apply(const Tensor<T>& in) const override {
        output_shape(in.shape);
        Tensor<T> out({out_dim_});
        for (std::size_t o = 0; o < out_dim_; ++o) {
            out.data[o] = b_[o] + detail::dot(w_.data() + o * in_dim_, in.data.data(), in_dim_);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T>& in = this->cached("fully_connected");
        require(grad_out.size() == out_dim_, ErrorCode::ShapeMismatch, "fully_connected gradient shape");
        Tensor<T> grad_in(in.shape);
        for (std::size_t o = 0; o < out_dim_; ++o) {
            const T g = grad_out.data[o];
            gb_[o] += g;
            detail::axpy(g, in.data.data(), gw_.data() + o * in_dim_, in_dim_);
            detail::axpy(g, w_.data() + o * in_dim_, grad_in.data.data(), in_dim_);
        }
        return grad_in;
    }

    std::vector<ParamRef<T>> params() override { return {{w_, gw_, in_dim_, false}, {b_, gb_, in_dim_, true}}; }

    LayerPtr<T> clone() const override { return std::make_unique<FullyConnected>(*this); }

private:
    std::size_t in_dim_, out_dim_;
    std::vector<T> w_, b_, gw_, gb_;
};

template <class T>
class Sequential final : public Layer<T> {
public:
    Sequential() = default;
    Sequential(const Sequential& other) {
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& other) {
        if (this != &other) *this = Sequential(other);
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    Sequential& add(LayerPtr<T> layer) {
        layers_.push_back(std::move(layer));
        return *this;
    }

    template <class L, class... Args>
    Sequential& emplace(Args&&... args) {
        return add(std::make_unique<L>(std::forward<Args>(args)...));
    }

    LayerKind kind() const override { return LayerKind::Sequential; }
    const std::vector<LayerPtr<T>>& layers() const { return layers_; }
    std::vector<LayerPtr<T>>& layers() { return layers_; }

    Shape output_shape(const Shape& in) const override {
        Shape s = in;
        for (const auto& l : layers_) s = l->output_shape(s);
        return s;
    }

    Tensor<T> apply(const Tensor<T>& in) const override {
        Tensor<T> x = in;
        for (const auto& l : layers_) x = l->apply(x);
        return x;
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        Tensor<T> x = in;
        for (auto& l : layers_) x = l->forward(x);
        return x;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<ParamRef<T>> params() override {
        std::vector<ParamRef<T>> out;
        for (auto& l : layers_) {
            auto p = l->params();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    void clear_cache() override {
        for (auto& l : layers_) l->clear_cache();
    }

    LayerPtr<T> clone() const override { return std::make_unique<Sequential>(*this); }

private:
    std::vector<LayerPtr<T>> layers_;
};

// Runs two branches on the same input and sums their outputs elementwise.
template <class T>
class ParallelSum final : public Layer<T> {
public:
    ParallelSum(Sequential<T> a, Sequential<T> b) : a_(std::move(a)), b_(std::move(b)) {}

    LayerKind kind() const override { return LayerKind::ParallelSum; }
    const Sequential<T>& branch_a() const { return a_; }
    const Sequential<T>& branch_b() const { return b_; }
    Sequential<T>& branch_a() { return a_; }
    Sequential<T>& branch_b() { return b_; }

    Shape output_shape(const Shape& in) const override {
        Shape sa = a_.output_shape(in);
        Shape sb = b_.output_shape(in);
        require(sa == sb, ErrorCode::ShapeMismatch,
                "parallel branches disagree: " + shape_string(sa) + " vs " + shape_string(sb));
        return sa;
    }

    Tensor<T> apply(const Tensor<T>& in) const override { return sum(a_.apply(in), b_.apply(in)); }

    Tensor<T> forward(const Tensor<T>& in) override { return sum(a_.forward(in), b_.forward(in)); }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> ga = a_.backward(grad_out);
        Tensor<T> gb = b_.backward(grad_out);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gb.data[i];
        return ga;
    }

    std::vector<ParamRef<T>> params() override {
        auto out = a_.params();
        auto pb = b_.params();
        out.insert(out.end(), pb.begin(), pb.end());
        return out;
    }

    void clear_cache() override {
        a_.clear_cache();
        b_.clear_cache();
    }

    LayerPtr<T> clone() const override { return std::make_unique<ParallelSum>(*this); }

private:
    static Tensor<T> sum(Tensor<T> a, const Tensor<T>& b) {
        require(a.shape == b.shape, ErrorCode::ShapeMismatch, "parallel branch outputs differ in shape");
        for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
        return a;
    }

    Sequential<T> a_, b_;
};

}  // namespace uwbpos::net

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

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uwbpos/error.hpp"
#include "uwbpos/net/layers.hpp"
#include "uwbpos/net/tensor.hpp"
#include "uwbpos/rng.hpp"

namespace uwbpos::net {

// Layer stack plus the Adam moment buffers that mirror its parameters.
template <class T>
class Network {
public:
    Network() = default;
    Network(Shape input_shape, Sequential<T> body) : input_shape_(std::move(input_shape)), body_(std::move(body)) {
        output_shape_ = body_.output_shape(input_shape_);
        reset_optimizer();
    }

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    const Sequential<T>& body() const { return body_; }
    Sequential<T>& body() { return body_; }

    std::vector<ParamRef<T>> params() { return body_.params(); }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.value.size();
        return n;
    }

    // Uniform(+-sqrt(1/fan_in)) for every parameter, drawn in layer order.
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& p : params()) {
            const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
            for (T& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
        }
        reset_optimizer();
    }

    void reset_optimizer() {
        m_.clear();
        v_.clear();
        for (const auto& p : params()) {
            m_.emplace_back(p.value.size(), T{0});
            v_.emplace_back(p.value.size(), T{0});
        }
        step_ = 0;
    }

    void check_input(const Tensor<T>& x) const {
        require(x.shape == input_shape_, ErrorCode::ShapeMismatch,
                "network expects " + shape_string(input_shape_) + " but got " + shape_string(x.shape));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        check_input(x);
        return body_.forward(x);
    }

    Tensor<T> predict(const Tensor<T>& x) const {
        check_input(x);
        return body_.apply(x);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        require(grad_out.shape == output_shape_, ErrorCode::ShapeMismatch, "loss gradient shape");
        return body_.backward(grad_out);
    }

    void zero_grad() {
        for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), T{0});
    }

    std::vector<std::vector<T>> snapshot() {
        std::vector<std::vector<T>> out;
        for (const auto& p : params()) out.emplace_back(p.value.begin(), p.value.end());
        return out;
    }

    void restore(const std::vector<std::vector<T>>& snap) {
        auto ps = params();
        require(snap.size() == ps.size(), ErrorCode::ShapeMismatch, "snapshot does not match network");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            require(snap[i].size() == ps[i].value.size(), ErrorCode::ShapeMismatch, "snapshot tensor size");
            std::copy(snap[i].begin(), snap[i].end(), ps[i].value.begin());
        }
    }

    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    std::int64_t& step() { return step_; }

private:
    Shape input_shape_;
    Shape output_shape_;
    Sequential<T> body_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t step_ = 0;
};

template <class T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad;
};

// Mean over all elements of (pred - target)^2, with its gradient.
template <class T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require(pred.shape == target.shape, ErrorCode::ShapeMismatch,
            "mse shapes " + shape_string(pred.shape) + " vs " + shape_string(target.shape));
    require(pred.size() > 0, ErrorCode::ShapeMismatch, "mse of empty tensors");
    LossResult<T> r{0.0, Tensor<T>(pred.shape)};
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        r.loss += d * d;
        r.grad.data[i] = static_cast<T>(2.0 * d / n);
    }
    r.loss /= n;
    return r;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update using the accumulated gradients; `t` is
// the 1-based step index.
template <class T>
void adam_step(Network<T>& net, const AdamConfig& cfg, double lr, std::int64_t t) {
    require(t >= 1, ErrorCode::InvalidArgument, "Adam step index must be >= 1");
    auto ps = net.params();
    auto& m = net.first_moments();
    auto& v = net.second_moments();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T step = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg.eps);
    for (std::size_t j = 0; j < ps.size(); ++j) {
        T* w = ps[j].value.data();
        const T* g = ps[j].grad.data();
        T* mj = m[j].data();
        T* vj = v[j].data();
        const std::size_t n = ps[j].value.size();
        for (std::size_t i = 0; i < n; ++i) {
            mj[i] = b1 * mj[i] + (T{1} - b1) * g[i];
            vj[i] = b2 * vj[i] + (T{1} - b2) * g[i] * g[i];
            w[i] -= step * mj[i] / (std::sqrt(vj[i] * inv_c2) + eps);
        }
    }
    net.step() = t;
}

struct TrainConfig {
    std::size_t batch_size = 32;
    double lr0 = 1e-3;
    int max_epochs = 250;
    int patience_early = 25;
    int plateau_patience = 10;
    double plateau_factor = 0.5;
    double min_lr = 1e-5;
    AdamConfig adam;
    std::uint64_t seed = 1;

    void validate() const {
        require(batch_size >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
        require(lr0 >= 0.0, ErrorCode::InvalidArgument, "learning rate must be >= 0");
        require(max_epochs >= 1, ErrorCode::InvalidArgument, "max_epochs must be >= 1");
        require(patience_early >= 1 && plateau_patience >= 1, ErrorCode::InvalidArgument,
                "patience values must be >= 1");
        require(plateau_factor > 0.0 && plateau_factor < 1.0, ErrorCode::InvalidArgument,
                "plateau factor must be in (0, 1)");
    }
};

template <class T>
struct Sample {
    Tensor<T> input;
    Tensor<T> target;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> lr;
    int best_epoch = 0;  // 1-based
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool early_stopped = false;

    int epochs_run() const { return static_cast<int>(val_loss.size()); }
};

template <class T>
double evaluate_loss(const Network<T>& net, std::span<const Sample<T>> data) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& s : data) {
        const Tensor<T> pred = net.predict(s.input);
        require(pred.shape == s.target.shape, ErrorCode::ShapeMismatch, "target shape does not match output");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(pred.data[i]) - static_cast<double>(s.target.data[i]);
            acc += d * d;
        }
        count += pred.size();
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

// Mini-batch Adam on MSE with learning-rate decay on validation plateaus and
// early stopping. The network ends up holding the best-validation weights.
template <class T>
TrainHistory train(Network<T>& net, std::span<const Sample<T>> train_set, std::span<const Sample<T>> val_set,
                   const TrainConfig& cfg) {
    cfg.validate();
    require(!train_set.empty(), ErrorCode::EmptyDataset, "training set is empty");
    require(!val_set.empty(), ErrorCode::EmptyDataset, "validation set is empty");

    TrainHistory hist;
    Rng rng(derive_seed(cfg.seed, 0x7261696eULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double lr = cfg.lr0;
    int since_best = 0;
    int since_plateau = 0;
    std::int64_t t = net.step();
    auto best = net.snapshot();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            net.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = train_set[order[b]];
                const Tensor<T> pred = net.forward(s.input);
                auto loss = mse_loss(pred, s.target);
                for (T& g : loss.grad.data) g = static_cast<T>(g * scale);
                net.backward(loss.grad);
                epoch_loss += loss.loss * static_cast<double>(pred.size());
                epoch_count += pred.size();
            }
            adam_step(net, cfg.adam, lr, ++t);
        }

        const double val = evaluate_loss<T>(net, val_set);
        hist.train_loss.push_back(epoch_loss / static_cast<double>(epoch_count));
        hist.val_loss.push_back(val);
        hist.lr.push_back(lr);

        if (val < hist.best_val_loss) {
            hist.best_val_loss = val;
            hist.best_epoch = epoch;
            best = net.snapshot();
            since_best = 0;
            since_plateau = 0;
        } else {
            ++since_best;
            ++since_plateau;
            if (since_best >= cfg.patience_early) {
                hist.early_stopped = true;
                break;
            }
            if (since_plateau >= cfg.plateau_patience) {
                lr = std::max(lr * cfg.plateau_factor, std::min(cfg.min_lr, lr));
                since_plateau = 0;
            }
        }
    }
    net.restore(best);
    net.body().clear_cache();
    return hist;
}

}  // namespace uwbpos::net

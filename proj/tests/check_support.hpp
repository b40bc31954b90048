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

// Reference implementations shared by the unit tests and the acceptance
// runner. Nothing here calls into the detector or solver code under test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "uwbpos/net/layers.hpp"
#include "uwbpos/rng.hpp"
#include "uwbpos/toa_conv.hpp"

namespace uwbpos::check {

// Straight-line reading of the detector definitions. Every out-of-range
// access goes through `at`, which returns the padding value.
inline double at(const std::vector<double>& v, long i, double pad) {
    return (i < 0 || i >= static_cast<long>(v.size())) ? pad : v[static_cast<std::size_t>(i)];
}

inline int oracle_peak(const std::vector<double>& v, double beta) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, x);
    const double ninf = -std::numeric_limits<double>::infinity();
    for (long n = 0; n < static_cast<long>(v.size()); ++n) {
        if (at(v, n, 0) >= beta * mx && at(v, n, 0) >= at(v, n - 1, ninf) && at(v, n, 0) >= at(v, n + 1, ninf)) {
            return static_cast<int>(n);
        }
    }
    return -1;
}

inline int oracle_lde(const std::vector<double>& v, const LdeParams& p) {
    const long n = static_cast<long>(v.size());
    std::vector<double> y(v.size());
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (long j = i - p.w_avg / 2; j <= i + p.w_avg / 2; ++j) s += at(v, j, 0.0);
        y[static_cast<std::size_t>(i)] = s / p.w_avg;
    }
    double ymax = 0.0;
    for (double x : y) ymax = std::max(ymax, x);
    for (long i = 0; i < n; ++i) {
        double us = -1e300, ul = -1e300;
        for (long j = i; j <= i + p.w_small - 1; ++j) us = std::max(us, at(y, j, 0.0));
        for (long j = i - p.w_large; j <= i - 1; ++j) ul = std::max(ul, at(y, j, 0.0));
        if (us >= p.beta * ymax && us > p.lede_factor * ul) return static_cast<int>(i);
    }
    return -1;
}

using namespace uwbpos::net;

template <class T>
inline Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(s));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Inputs kept away from the ReLU kink so finite differences stay smooth.
inline Tensor<double> kink_free_tensor(Shape s, Rng& rng) {
    Tensor<double> t(std::move(s));
    for (double& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0);
    return t;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * w.data[i];
    return s;
}

struct GradReport {
    double max_rel_param = 0.0;
    double max_rel_input = 0.0;
};

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Central differences of L = <layer(x), w> with respect to every parameter
// and every input element.
inline GradReport gradient_check(Layer<double>& layer, Tensor<double> x, Rng& rng) {
    const double h = 1e-5;
    const Shape out_shape = layer.output_shape(x.shape);
    const auto w = random_tensor<double>(out_shape, rng);

    for (auto& p : layer.params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
    layer.forward(x);
    const auto grad_in = layer.backward(w);

    GradReport rep;
    for (auto& p : layer.params()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = weighted_sum(layer.apply(x), w);
            p.value[i] = keep - h;
            const double down = weighted_sum(layer.apply(x), w);
            p.value[i] = keep;
            rep.max_rel_param = std::max(rep.max_rel_param, rel_err(p.grad[i], (up - down) / (2 * h)));
        }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = weighted_sum(layer.apply(x), w);
        x.data[i] = keep - h;
        const double down = weighted_sum(layer.apply(x), w);
        x.data[i] = keep;
        rep.max_rel_input = std::max(rep.max_rel_input, rel_err(grad_in.data[i], (up - down) / (2 * h)));
    }
    return rep;
}

inline void randomize(Layer<double>& layer, Rng& rng) {
    for (auto& p : layer.params())
        for (double& v : p.value) v = rng.uniform(-0.5, 0.5);
}

}  // namespace uwbpos::check

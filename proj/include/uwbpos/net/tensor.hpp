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

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/error.hpp"

namespace uwbpos::net {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

// Dense row-major tensor. Samples are (channels, length) or flat (dim).
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        require(data.size() == shape_size(shape), ErrorCode::ShapeMismatch,
                "value count " + std::to_string(data.size()) + " does not match shape " + shape_string(shape));
    }

    std::size_t size() const { return data.size(); }
    std::size_t channels() const { return shape.size() >= 2 ? shape[shape.size() - 2] : 1; }
    std::size_t length() const { return shape.empty() ? 0 : shape.back(); }

    T* row(std::size_t c) { return data.data() + c * length(); }
    const T* row(std::size_t c) const { return data.data() + c * length(); }

    T& operator()(std::size_t c, std::size_t n) { return data[c * length() + n]; }
    const T& operator()(std::size_t c, std::size_t n) const { return data[c * length() + n]; }
};

}  // namespace uwbpos::net

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

// Domain types shared by every module: physical constants, CIR records,
// the fixed-length estimator window and unit conversions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/error.hpp"

namespace uwbpos {

// Samples kept before the device-reported first path.
inline constexpr int kPreFirstPath = 10;
// Samples kept from the first path onwards (first path included).
inline constexpr int kPostFirstPath = 152;
inline constexpr std::size_t kWindowLength = kPreFirstPath + kPostFirstPath;

struct PhysConstants {
    double c_cm_per_ns = 29.9792458;
    double dt_ns = 1.0;

    // Range covered by one CIR sample.
    double cm_per_sample() const { return c_cm_per_ns * dt_ns; }

    void validate() const {
        require(c_cm_per_ns > 0.0 && std::isfinite(c_cm_per_ns), ErrorCode::InvalidArgument,
                "speed of light must be positive");
        require(dt_ns > 0.0 && std::isfinite(dt_ns), ErrorCode::InvalidArgument,
                "CIR time resolution must be positive");
    }
};

struct Position2D {
    double x = 0.0;  // cm
    double y = 0.0;  // cm

    friend Position2D operator+(Position2D a, Position2D b) { return {a.x + b.x, a.y + b.y}; }
    friend Position2D operator-(Position2D a, Position2D b) { return {a.x - b.x, a.y - b.y}; }
    friend Position2D operator*(double s, Position2D a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Position2D&, const Position2D&) = default;

    double norm() const { return std::hypot(x, y); }
};

inline double distance(Position2D a, Position2D b) { return (a - b).norm(); }

// One channel impulse response between an anchor and the tag, as magnitudes.
struct CirRecord {
    std::string env_id;
    int anchor_id = 0;
    int tag_id = 0;
    int rep_id = 0;
    Position2D anchor_pos;
    Position2D tag_pos;
    int first_path_idx = 0;        // device-reported first path, sample index
    double toa_dwm = 0.0;          // device ToA, fractional sample index
    std::optional<double> range_err_cm;  // device range minus true range
    std::vector<double> samples;

    void validate() const {
        require(!samples.empty(), ErrorCode::InvalidArgument, "CIR has no samples");
        const auto n = static_cast<int>(samples.size());
        require(first_path_idx >= 0 && first_path_idx < n, ErrorCode::InvalidArgument,
                "first_path_idx " + std::to_string(first_path_idx) + " outside [0, " +
                    std::to_string(n) + ")");
        require(toa_dwm >= 0.0 && toa_dwm < static_cast<double>(n), ErrorCode::InvalidArgument,
                "toa_dwm outside the CIR buffer");
        for (double s : samples) {
            require(s >= 0.0 && std::isfinite(s), ErrorCode::InvalidArgument,
                    "CIR magnitudes must be finite and non-negative");
        }
    }
};

// Max-normalized 162-sample excerpt around the device first path.
//
// Element kPreFirstPath is always the first-path sample. When the excerpt
// starts before the raw buffer, `lead_pad` zeros are inserted in front and
// `window_start` is clamped to 0; `origin()` gives the (possibly negative) raw
// index that element 0 corresponds to.
struct CirWindow {
    std::array<double, kWindowLength> values{};
    int window_start = 0;
    int lead_pad = 0;
    double norm_factor = 1.0;

    int origin() const { return window_start - lead_pad; }
};

inline CirWindow preprocess(const CirRecord& record) {
    require(!record.samples.empty(), ErrorCode::InvalidArgument, "CIR has no samples");
    const auto n_raw = static_cast<int>(record.samples.size());
    require(record.first_path_idx >= 0 && record.first_path_idx < n_raw,
            ErrorCode::InvalidArgument, "first_path_idx outside the CIR buffer");

    CirWindow w;
    const int origin = record.first_path_idx - kPreFirstPath;
    w.window_start = std::max(origin, 0);
    w.lead_pad = w.window_start - origin;

    double peak = 0.0;
    for (std::size_t i = 0; i < kWindowLength; ++i) {
        const int raw = origin + static_cast<int>(i);
        const double v = (raw >= 0 && raw < n_raw) ? record.samples[static_cast<std::size_t>(raw)] : 0.0;
        w.values[i] = v;
        peak = std::max(peak, v);
    }
    if (!(peak > 0.0)) {
        throw Error(ErrorCode::AllZeroCir, "window around first path " +
                                               std::to_string(record.first_path_idx) +
                                               " is all zero");
    }
    for (double& v : w.values) v /= peak;
    w.norm_factor = peak;
    return w;
}

// Ground-truth ToA from the device ToA and its ranging error.
inline double toa_label(const CirRecord& record, const PhysConstants& k = {}) {
    if (!record.range_err_cm) {
        throw Error(ErrorCode::MissingLabel, "record anchor " + std::to_string(record.anchor_id) +
                                                 " tag " + std::to_string(record.tag_id) +
                                                 " has no ranging error");
    }
    return record.toa_dwm - *record.range_err_cm / k.cm_per_sample();
}

inline double toa_to_range(double toa, const PhysConstants& k = {}) { return toa * k.cm_per_sample(); }

inline double range_to_toa(double range_cm, const PhysConstants& k = {}) {
    return range_cm / k.cm_per_sample();
}

}  // namespace uwbpos

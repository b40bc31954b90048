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

// Conventional ToA detectors: first peak above a relative noise threshold,
// and leading-edge detection with a moving-average / moving-maximum filter
// bank. Both operate on sample-resolution indices.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/core.hpp"
#include "uwbpos/error.hpp"

namespace uwbpos {

struct PeakParams {
    double beta = 0.2;  // threshold = beta * max

    void validate() const {
        require(beta > 0.0 && beta <= 1.0, ErrorCode::InvalidArgument, "peak beta must be in (0, 1]");
    }
    friend bool operator==(const PeakParams&, const PeakParams&) = default;
};

struct LdeParams {
    double beta = 0.2;
    double lede_factor = 2.0;
    int w_avg = 1;    // centered moving average, odd
    int w_small = 2;  // forward moving maximum
    int w_large = 8;  // trailing moving maximum

    void validate() const {
        require(beta > 0.0 && beta <= 1.0, ErrorCode::InvalidArgument, "LDE beta must be in (0, 1]");
        require(lede_factor > 0.0, ErrorCode::InvalidArgument, "LDE factor must be positive");
        require(w_avg >= 1 && w_avg % 2 == 1, ErrorCode::InvalidArgument, "w_avg must be odd and >= 1");
        require(w_small >= 1, ErrorCode::InvalidArgument, "w_small must be >= 1");
        require(w_large > w_small, ErrorCode::InvalidArgument, "w_large must exceed w_small");
    }
    friend bool operator==(const LdeParams&, const LdeParams&) = default;
};

namespace detail {

inline double max_of(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    return m;
}

// Smallest local maximum reaching beta * max(v); -1 if none.
inline int first_peak(std::span<const double> v, double beta) {
    if (v.empty()) return -1;
    const double threshold = beta * max_of(v);
    const auto n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        const double x = v[static_cast<std::size_t>(i)];
        if (x < threshold) continue;
        if (i > 0 && x < v[static_cast<std::size_t>(i - 1)]) continue;
        if (i + 1 < n && x < v[static_cast<std::size_t>(i + 1)]) continue;
        return i;
    }
    return -1;
}

inline std::vector<double> centered_average(std::span<const double> v, int width) {
    const auto n = static_cast<int>(v.size());
    const int half = width / 2;
    std::vector<double> out(v.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j) {
            acc += v[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = acc / width;
    }
    return out;
}

// out[i] = max(v[i .. i+width-1]), positions past the end read as zero.
inline std::vector<double> forward_max(std::span<const double> v, int width) {
    const auto n = static_cast<int>(v.size());
    std::vector<double> out(v.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double m = (i + width > n) ? 0.0 : -std::numeric_limits<double>::infinity();
        for (int j = i; j < std::min(n, i + width); ++j) m = std::max(m, v[static_cast<std::size_t>(j)]);
        out[static_cast<std::size_t>(i)] = m;
    }
    return out;
}

// out[i] = max(v[i-width .. i-1]), positions before the start read as zero.
inline std::vector<double> trailing_max(std::span<const double> v, int width) {
    const auto n = static_cast<int>(v.size());
    std::vector<double> out(v.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double m = (i - width < 0) ? 0.0 : -std::numeric_limits<double>::infinity();
        for (int j = std::max(0, i - width); j < i; ++j) m = std::max(m, v[static_cast<std::size_t>(j)]);
        out[static_cast<std::size_t>(i)] = m;
    }
    return out;
}

inline int first_edge(std::span<const double> small, std::span<const double> large, double threshold,
                      double factor) {
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[i] >= threshold && small[i] > factor * large[i]) return static_cast<int>(i);
    }
    return -1;
}

inline int leading_edge(std::span<const double> v, const LdeParams& p) {
    if (v.empty()) return -1;
    const auto y = centered_average(v, p.w_avg);
    const auto small = forward_max(y, p.w_small);
    const auto large = trailing_max(y, p.w_large);
    return first_edge(small, large, p.beta * max_of(y), p.lede_factor);
}

}  // namespace detail

// First-peak index on an arbitrary magnitude sequence (used for device emulation).
inline int peak_index(std::span<const double> samples, const PeakParams& p) {
    p.validate();
    const int idx = detail::first_peak(samples, p.beta);
    if (idx < 0) throw Error(ErrorCode::NoPeakFound, "no local maximum above threshold");
    return idx;
}

inline int lde_index(std::span<const double> samples, const LdeParams& p) {
    p.validate();
    const int idx = detail::leading_edge(samples, p);
    if (idx < 0) throw Error(ErrorCode::NoEdgeFound, "no sample passes the leading-edge test");
    return idx;
}

// Window-relative ToA estimates.
inline double peak_toa(const CirWindow& w, const PeakParams& p) {
    return static_cast<double>(peak_index(w.values, p));
}

inline double lde_toa(const CirWindow& w, const LdeParams& p) {
    return static_cast<double>(lde_index(w.values, p));
}

enum class EstimatorKind { Peak, Lde };

// Candidate values per parameter. Peak uses only `beta`.
struct TuneGrid {
    std::vector<double> beta;
    std::vector<double> lede_factor;
    std::vector<int> w_avg;
    std::vector<int> w_small;
    std::vector<int> w_large;

    static TuneGrid default_peak() {
        TuneGrid g;
        for (int i = 1; i <= 12; ++i) g.beta.push_back(0.05 * i);
        return g;
    }

    static TuneGrid default_lde() {
        TuneGrid g = default_peak();
        g.lede_factor = {1.2, 1.5, 2.0, 3.0};
        g.w_avg = {1, 3, 5};
        g.w_small = {2, 4, 8};
        g.w_large = {8, 16, 32};
        return g;
    }

    // LDE points in grid order (beta, factor, w_avg, w_small, w_large), invalid
    // window combinations skipped.
    std::vector<LdeParams> lde_points() const {
        std::vector<LdeParams> out;
        for (double b : beta)
            for (double f : lede_factor)
                for (int wa : w_avg)
                    for (int ws : w_small)
                        for (int wl : w_large) {
                            LdeParams p{b, f, wa, ws, wl};
                            if (ws < wl) {
                                p.validate();
                                out.push_back(p);
                            }
                        }
        return out;
    }
};

struct TuneResult {
    EstimatorKind kind = EstimatorKind::Peak;
    PeakParams peak;
    LdeParams lde;
    double mae = 0.0;         // samples
    std::size_t grid_size = 0;
};

// Estimate used when a detector finds nothing: the device first path.
inline constexpr double kDetectorFallback = static_cast<double>(kPreFirstPath);

inline double peak_toa_or_fallback(const CirWindow& w, const PeakParams& p) {
    const int idx = detail::first_peak(w.values, p.beta);
    return idx < 0 ? kDetectorFallback : static_cast<double>(idx);
}

inline double lde_toa_or_fallback(const CirWindow& w, const LdeParams& p) {
    const int idx = detail::leading_edge(w.values, p);
    return idx < 0 ? kDetectorFallback : static_cast<double>(idx);
}

// Exhaustive search for the grid point with lowest mean |estimate - label|;
// ties keep the earliest grid point.
inline TuneResult tune(EstimatorKind kind, const TuneGrid& grid, std::span<const CirWindow> windows,
                       std::span<const double> labels) {
    require(!windows.empty(), ErrorCode::EmptyDataset, "tuning set is empty");
    require(windows.size() == labels.size(), ErrorCode::ShapeMismatch, "one label per window required");
    require(!grid.beta.empty(), ErrorCode::EmptyGrid, "beta candidates are empty");

    TuneResult best;
    best.kind = kind;
    const double n = static_cast<double>(windows.size());

    if (kind == EstimatorKind::Peak) {
        std::vector<double> err(grid.beta.size(), 0.0);
        for (double b : grid.beta) PeakParams{b}.validate();
        for (std::size_t i = 0; i < windows.size(); ++i) {
            for (std::size_t g = 0; g < grid.beta.size(); ++g) {
                err[g] += std::abs(peak_toa_or_fallback(windows[i], PeakParams{grid.beta[g]}) - labels[i]);
            }
        }
        const auto it = std::min_element(err.begin(), err.end());
        const auto g = static_cast<std::size_t>(it - err.begin());
        best.peak = PeakParams{grid.beta[g]};
        best.mae = *it / n;
        best.grid_size = err.size();
        return best;
    }

    require(!grid.lede_factor.empty() && !grid.w_avg.empty() && !grid.w_small.empty() &&
                !grid.w_large.empty(),
            ErrorCode::EmptyGrid, "LDE grid has an empty parameter list");
    const auto points = grid.lde_points();
    require(!points.empty(), ErrorCode::EmptyGrid, "no LDE grid point has w_small < w_large");

    // Filter outputs depend only on the window sizes; share them across
    // the beta/factor axes.
    std::vector<double> err(points.size(), 0.0);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const std::span<const double> v(windows[i].values);
        for (int wa : grid.w_avg) {
            const auto y = detail::centered_average(v, wa);
            const double ymax = detail::max_of(y);
            std::vector<std::vector<double>> small(grid.w_small.size()), large(grid.w_large.size());
            for (std::size_t s = 0; s < grid.w_small.size(); ++s) small[s] = detail::forward_max(y, grid.w_small[s]);
            for (std::size_t l = 0; l < grid.w_large.size(); ++l) large[l] = detail::trailing_max(y, grid.w_large[l]);

            std::size_t g = 0;
            for (double b : grid.beta)
                for (double f : grid.lede_factor)
                    for (int wa2 : grid.w_avg)
                        for (std::size_t s = 0; s < grid.w_small.size(); ++s)
                            for (std::size_t l = 0; l < grid.w_large.size(); ++l) {
                                if (grid.w_small[s] >= grid.w_large[l]) continue;
                                if (wa2 == wa) {
                                    const int idx = detail::first_edge(small[s], large[l], b * ymax, f);
                                    const double est = idx < 0 ? kDetectorFallback : static_cast<double>(idx);
                                    err[g] += std::abs(est - labels[i]);
                                }
                                ++g;
                            }
        }
    }
    const auto it = std::min_element(err.begin(), err.end());
    best.lde = points[static_cast<std::size_t>(it - err.begin())];
    best.mae = *it / n;
    best.grid_size = points.size();
    return best;
}

}  // namespace uwbpos

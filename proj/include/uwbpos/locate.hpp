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

// ToA-based 2D multilateration: a closed-form linear least-squares solver
// and a Gauss-Newton refinement of the range residuals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/core.hpp"
#include "uwbpos/error.hpp"

namespace uwbpos {

struct RangeObservation {
    Position2D anchor_pos;
    double range_cm = 0.0;
};

struct SolverConfig {
    int max_iters = 50;
    double tol_cm = 1e-6;
    double damping = 0.0;

    void validate() const {
        require(max_iters >= 1, ErrorCode::InvalidArgument, "max_iters must be >= 1");
        require(tol_cm > 0.0, ErrorCode::InvalidArgument, "tol_cm must be positive");
        require(damping >= 0.0, ErrorCode::InvalidArgument, "damping must be non-negative");
    }
};

inline constexpr double kMaxConditionNumber = 1e12;

namespace detail {

// Symmetric 2x2 [a b; b c].
struct Sym2 {
    double a = 0, b = 0, c = 0;

    double condition() const {
        const double mean = 0.5 * (a + c);
        const double rad = std::hypot(0.5 * (a - c), b);
        const double lmax = mean + rad;
        const double lmin = mean - rad;
        if (!(lmin > 0.0)) return std::numeric_limits<double>::infinity();
        return lmax / lmin;
    }

    // Solves [a b; b c] x = (r0, r1).
    Position2D solve(double r0, double r1) const {
        const double det = a * c - b * b;
        return {(c * r0 - b * r1) / det, (a * r1 - b * r0) / det};
    }
};

inline void check_observations(std::span<const RangeObservation> obs) {
    if (obs.size() < 3) {
        throw Error(ErrorCode::TooFewAnchors, "need at least 3 ranges, got " + std::to_string(obs.size()));
    }
    for (const auto& o : obs) {
        require(std::isfinite(o.range_cm) && o.range_cm >= 0.0, ErrorCode::InvalidArgument,
                "ranges must be finite and non-negative");
        require(std::isfinite(o.anchor_pos.x) && std::isfinite(o.anchor_pos.y), ErrorCode::InvalidArgument,
                "anchor positions must be finite");
    }
}

}  // namespace detail

// Subtracts the first observation's circle equation from the others and
// solves the resulting linear system in the least-squares sense.
inline Position2D algo1_lls(std::span<const RangeObservation> obs) {
    detail::check_observations(obs);
    const auto& ref = obs.front();
    const double ref_sq = ref.anchor_pos.x * ref.anchor_pos.x + ref.anchor_pos.y * ref.anchor_pos.y;
    detail::Sym2 ata;
    double atb0 = 0.0, atb1 = 0.0;
    for (std::size_t i = 1; i < obs.size(); ++i) {
        const auto& o = obs[i];
        const double ax = 2.0 * (o.anchor_pos.x - ref.anchor_pos.x);
        const double ay = 2.0 * (o.anchor_pos.y - ref.anchor_pos.y);
        const double rhs = ref.range_cm * ref.range_cm - o.range_cm * o.range_cm +
                           (o.anchor_pos.x * o.anchor_pos.x + o.anchor_pos.y * o.anchor_pos.y) - ref_sq;
        ata.a += ax * ax;
        ata.b += ax * ay;
        ata.c += ay * ay;
        atb0 += ax * rhs;
        atb1 += ay * rhs;
    }
    const double cond = ata.condition();
    if (!(cond <= kMaxConditionNumber)) {
        throw Error(ErrorCode::DegenerateGeometry,
                    "anchor geometry is rank deficient (condition number " + std::to_string(cond) + ")");
    }
    return ata.solve(atb0, atb1);
}

struct IterativeResult {
    Position2D position;
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_norms;  // before each step, then final
};

inline double residual_norm(std::span<const RangeObservation> obs, Position2D p) {
    double acc = 0.0;
    for (const auto& o : obs) {
        const double r = distance(p, o.anchor_pos) - o.range_cm;
        acc += r * r;
    }
    return std::sqrt(acc);
}

// Gauss-Newton on r_i = |p - a_i| - range_i, stopping once the step is
// shorter than tol_cm. Reaching max_iters leaves `converged` false.
inline IterativeResult algo2_iterative(std::span<const RangeObservation> obs, Position2D init,
                                       const SolverConfig& cfg = {}) {
    detail::check_observations(obs);
    cfg.validate();
    require(std::isfinite(init.x) && std::isfinite(init.y), ErrorCode::InvalidArgument,
            "initial position must be finite");

    IterativeResult res;
    res.position = init;
    for (int it = 0; it < cfg.max_iters; ++it) {
        detail::Sym2 jtj;
        double jtr0 = 0.0, jtr1 = 0.0, rr = 0.0;
        for (const auto& o : obs) {
            const Position2D d = res.position - o.anchor_pos;
            const double dist = d.norm();
            if (!(dist > 1e-12)) {
                throw Error(ErrorCode::SingularUpdate, "iterate coincides with an anchor; range gradient undefined");
            }
            const double jx = d.x / dist, jy = d.y / dist;
            const double r = dist - o.range_cm;
            jtj.a += jx * jx;
            jtj.b += jx * jy;
            jtj.c += jy * jy;
            jtr0 += jx * r;
            jtr1 += jy * r;
            rr += r * r;
        }
        res.residual_norms.push_back(std::sqrt(rr));
        jtj.a += cfg.damping;
        jtj.c += cfg.damping;
        if (!(jtj.condition() <= kMaxConditionNumber)) {
            throw Error(ErrorCode::SingularUpdate, "Jacobian has rank < 2 at iteration " + std::to_string(it));
        }
        const Position2D step = -1.0 * jtj.solve(jtr0, jtr1);
        res.position = res.position + step;
        res.iterations = it + 1;
        if (step.norm() < cfg.tol_cm) {
            res.converged = true;
            break;
        }
    }
    res.residual_norms.push_back(residual_norm(obs, res.position));
    return res;
}

enum class InitMode { Algo1, ClosestAnchor, Centroid };

struct PositionFix {
    Position2D position;
    int iterations = 0;
    bool converged = false;
    bool fallback_init = false;  // Algo1 failed, centroid used
    bool singular = false;       // refinement aborted, initial estimate returned
};

inline Position2D anchor_centroid(std::span<const RangeObservation> obs) {
    Position2D c;
    for (const auto& o : obs) c = c + o.anchor_pos;
    return (1.0 / static_cast<double>(obs.size())) * c;
}

// Anchor with the smallest measured range, nudged 1 cm towards the anchor
// centroid so the first Jacobian is defined.
inline Position2D closest_anchor_init(std::span<const RangeObservation> obs) {
    const auto it = std::min_element(obs.begin(), obs.end(),
                                     [](const auto& a, const auto& b) { return a.range_cm < b.range_cm; });
    const Position2D toward = anchor_centroid(obs) - it->anchor_pos;
    const double n = toward.norm();
    if (n > 0.0) return it->anchor_pos + (1.0 / n) * toward;
    return it->anchor_pos + Position2D{1.0, 0.0};
}

inline PositionFix locate_ranges(std::span<const RangeObservation> obs, InitMode mode = InitMode::Algo1,
                                 const SolverConfig& cfg = {}) {
    detail::check_observations(obs);
    PositionFix fix;
    Position2D init;
    switch (mode) {
        case InitMode::Algo1:
            try {
                init = algo1_lls(obs);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DegenerateGeometry) throw;
                init = anchor_centroid(obs);
                fix.fallback_init = true;
            }
            break;
        case InitMode::ClosestAnchor: init = closest_anchor_init(obs); break;
        case InitMode::Centroid: init = anchor_centroid(obs); break;
    }
    try {
        const auto r = algo2_iterative(obs, init, cfg);
        fix.position = r.position;
        fix.iterations = r.iterations;
        fix.converged = r.converged;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularUpdate) throw;
        fix.position = init;
        fix.singular = true;
    }
    return fix;
}

// Absolute ToAs (fractional samples, aligned so that range = toa * c * dt)
// to a position: Algo1 seeds Algo2.
inline PositionFix position_from_toas(std::span<const double> toas, std::span<const Position2D> anchors,
                                      const PhysConstants& k = {}, const SolverConfig& cfg = {},
                                      InitMode mode = InitMode::Algo1) {
    require(toas.size() == anchors.size(), ErrorCode::ShapeMismatch, "one ToA per anchor required");
    std::vector<RangeObservation> obs;
    for (std::size_t i = 0; i < toas.size(); ++i) {
        if (!std::isfinite(toas[i])) continue;
        obs.push_back({anchors[i], std::max(0.0, toa_to_range(toas[i], k))});
    }
    if (obs.size() < 3) {
        throw Error(ErrorCode::TooFewAnchors, "only " + std::to_string(obs.size()) + " usable ToAs");
    }
    return locate_ranges(obs, mode, cfg);
}

inline double positioning_error(Position2D est, Position2D truth) { return distance(est, truth); }

}  // namespace uwbpos

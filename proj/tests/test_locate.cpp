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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <numbers>

#include "uwbpos/locate.hpp"
#include "uwbpos/rng.hpp"

namespace uwbpos {
namespace {

std::vector<RangeObservation> exact(const std::vector<Position2D>& anchors, Position2D p) {
    std::vector<RangeObservation> obs;
    for (const auto& a : anchors) obs.push_back({a, distance(a, p)});
    return obs;
}

const std::vector<Position2D> kTriangle{{0, 0}, {1000, 0}, {0, 1000}};

std::vector<Position2D> random_anchors(Rng& rng, std::size_t n) {
    std::vector<Position2D> a;
    for (std::size_t i = 0; i < n; ++i) a.push_back({rng.uniform(0, 2000), rng.uniform(0, 1500)});
    return a;
}

TEST(Algo1, ExactTriangle) {
    const auto p = algo1_lls(exact(kTriangle, {300, 400}));
    EXPECT_NEAR(p.x, 300, 1e-7);
    EXPECT_NEAR(p.y, 400, 1e-7);
}

TEST(Algo1, CollinearAnchorsAreDegenerate) {
    const std::vector<Position2D> line{{0, 0}, {500, 0}, {1000, 0}};
    try {
        algo1_lls(exact(line, {300, 400}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateGeometry);
    }
}

TEST(Algo1, TooFewAnchors) {
    const std::vector<RangeObservation> two{{{0, 0}, 5}, {{10, 0}, 5}};
    try {
        algo1_lls(two);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewAnchors);
    }
    EXPECT_THROW(algo2_iterative(two, {1, 1}), Error);
}

TEST(Algo1, MatchesOrthogonalizationOracleOnNoisyRanges) {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const auto anchors = random_anchors(rng, 8);
        const Position2D truth{rng.uniform(0, 2000), rng.uniform(0, 1500)};
        auto obs = exact(anchors, truth);
        for (auto& o : obs) o.range_cm = std::max(0.0, o.range_cm + rng.normal(0.0, 10.0));

        // Same linearization, solved by Householder QR rather than normal equations.
        Eigen::MatrixXd A(7, 2);
        Eigen::VectorXd b(7);
        const auto& r = obs[0];
        for (int i = 1; i < 8; ++i) {
            const auto& o = obs[static_cast<std::size_t>(i)];
            A(i - 1, 0) = 2 * (o.anchor_pos.x - r.anchor_pos.x);
            A(i - 1, 1) = 2 * (o.anchor_pos.y - r.anchor_pos.y);
            b(i - 1) = r.range_cm * r.range_cm - o.range_cm * o.range_cm + o.anchor_pos.x * o.anchor_pos.x +
                       o.anchor_pos.y * o.anchor_pos.y - r.anchor_pos.x * r.anchor_pos.x -
                       r.anchor_pos.y * r.anchor_pos.y;
        }
        const Eigen::Vector2d ref = A.householderQr().solve(b);
        const auto p = algo1_lls(obs);
        EXPECT_NEAR(p.x, ref(0), 1e-4);  // 1e-6 m
        EXPECT_NEAR(p.y, ref(1), 1e-4);
    }
}

TEST(Algo2, StartingAtTruthConvergesInOneIteration) {
    const auto r = algo2_iterative(exact(kTriangle, {300, 400}), {300, 400});
    EXPECT_EQ(r.iterations, 1);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.position.x, 300, 1e-9);
}

TEST(Algo2, ConvergesFromFarStart) {
    // Origin coincides with the first anchor; start just beside it.
    const auto r = algo2_iterative(exact(kTriangle, {300, 400}), {1, 1});
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 10);
    EXPECT_NEAR(r.position.x, 300, 1e-7);
    EXPECT_NEAR(r.position.y, 400, 1e-7);
}

TEST(Algo2, MatchesReferenceGaussNewtonRun) {
    // Reference: textbook Gauss-Newton written against Eigen.
    Rng rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const auto anchors = random_anchors(rng, 6);
        auto obs = exact(anchors, {rng.uniform(200, 1800), rng.uniform(200, 1300)});
        for (auto& o : obs) o.range_cm = std::max(0.0, o.range_cm + rng.normal(0.0, 20.0));
        const Position2D init{rng.uniform(0, 2000), rng.uniform(0, 1500)};

        Eigen::Vector2d p(init.x, init.y);
        for (int it = 0; it < 50; ++it) {
            Eigen::MatrixXd J(6, 2);
            Eigen::VectorXd res(6);
            for (int i = 0; i < 6; ++i) {
                const Eigen::Vector2d a(obs[i].anchor_pos.x, obs[i].anchor_pos.y);
                const double d = (p - a).norm();
                J.row(i) = (p - a).transpose() / d;
                res(i) = d - obs[i].range_cm;
            }
            const Eigen::Vector2d step = -(J.transpose() * J).ldlt().solve(J.transpose() * res);
            p += step;
            if (step.norm() < 1e-6) break;
        }
        const auto r = algo2_iterative(obs, init);
        EXPECT_NEAR(r.position.x, p(0), 1e-6);
        EXPECT_NEAR(r.position.y, p(1), 1e-6);
    }
}

TEST(Algo2, IterateOnAnchorIsSingular) {
    auto obs = exact(kTriangle, {0, 0});
    try {
        algo2_iterative(obs, {0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularUpdate);
    }
}

TEST(Algo2, MaxItersLeavesNotConvergedFlag) {
    SolverConfig cfg;
    cfg.max_iters = 1;
    const auto r = algo2_iterative(exact(kTriangle, {300, 400}), {900, 900}, cfg);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Algo2, ResidualNonIncreasingWithExactRanges) {
    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const auto anchors = random_anchors(rng, 8);
        const Position2D truth{rng.uniform(300, 1700), rng.uniform(300, 1200)};
        const Position2D init = truth + Position2D{rng.normal(0, 150), rng.normal(0, 150)};
        const auto r = algo2_iterative(exact(anchors, truth), init);
        for (std::size_t i = 1; i < r.residual_norms.size(); ++i) {
            EXPECT_LE(r.residual_norms[i], r.residual_norms[i - 1] + 1e-9);
        }
    }
}

TEST(Solvers, ExactGeometryRecoversTruthQuickly) {
    Rng rng(34);
    const auto t0 = std::chrono::steady_clock::now();
    int done = 0;
    while (done < 1000) {
        const auto anchors = random_anchors(rng, 3 + rng.below(6));
        std::vector<RangeObservation> probe;
        for (const auto& a : anchors) probe.push_back({a, 1.0});
        try {
            algo1_lls(probe);
        } catch (const Error&) {
            continue;
        }
        const Position2D truth{rng.uniform(0, 2000), rng.uniform(0, 1500)};
        const auto obs = exact(anchors, truth);
        const auto a1 = algo1_lls(obs);
        const auto a2 = locate_ranges(obs);
        EXPECT_LT(distance(a1, truth), 1e-4);
        EXPECT_LT(distance(a2.position, truth), 1e-4);
        ++done;
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(Equivariance, TranslationAndRotation) {
    Rng rng(35);
    for (int trial = 0; trial < 100; ++trial) {
        const auto anchors = random_anchors(rng, 5);
        const Position2D truth{rng.uniform(0, 2000), rng.uniform(0, 1500)};
        const Position2D v{rng.uniform(-500, 500), rng.uniform(-500, 500)};
        const double th = rng.uniform(0, 2 * std::numbers::pi);
        const auto rot = [&](Position2D p) {
            return Position2D{std::cos(th) * p.x - std::sin(th) * p.y, std::sin(th) * p.x + std::cos(th) * p.y};
        };
        std::vector<Position2D> moved, turned;
        for (const auto& a : anchors) moved.push_back(a + v), turned.push_back(rot(a));
        const auto base = locate_ranges(exact(anchors, truth)).position;
        const auto m = locate_ranges(exact(moved, truth + v)).position;
        const auto t = locate_ranges(exact(turned, rot(truth))).position;
        EXPECT_LT(distance(m, base + v), 1e-9 * 1e2);
        EXPECT_LT(distance(t, rot(base)), 1e-9 * 1e2);
        const auto b1 = algo1_lls(exact(anchors, truth));
        EXPECT_LT(distance(algo1_lls(exact(moved, truth + v)), b1 + v), 1e-7);
        EXPECT_LT(distance(algo1_lls(exact(turned, rot(truth))), rot(b1)), 1e-7);
    }
}

TEST(LocateRanges, DegenerateAlgo1FallsBackToCentroid) {
    const std::vector<Position2D> line{{0, 0}, {500, 0}, {1000, 0}};
    const auto fix = locate_ranges(exact(line, {300, 400}));
    EXPECT_TRUE(fix.fallback_init || fix.singular);
}

TEST(LocateRanges, ClosestAnchorInitIsNudgedOffTheAnchor) {
    const auto obs = exact(kTriangle, {100, 50});
    const auto init = closest_anchor_init(obs);
    EXPECT_NEAR(distance(init, {0, 0}), 1.0, 1e-12);
    const auto fix = locate_ranges(obs, InitMode::ClosestAnchor);
    EXPECT_FALSE(fix.singular);
    EXPECT_LT(distance(fix.position, {100, 50}), 1e-6);
}

TEST(PositionFromToas, CleanLinksGiveSubCentimetreError) {
    const std::vector<Position2D> anchors{{0, 0}, {800, 0}, {800, 600}, {0, 600}};
    const Position2D truth{321, 234};
    std::vector<double> toas;
    for (const auto& a : anchors) toas.push_back(range_to_toa(distance(a, truth)));
    const auto fix = position_from_toas(toas, anchors);
    EXPECT_LT(positioning_error(fix.position, truth), 1.0);
}

TEST(PositionFromToas, ZeroRangesDoNotCrash) {
    const std::vector<Position2D> anchors{{0, 0}, {800, 0}, {800, 600}, {0, 600}, {400, 0}, {800, 300}, {400, 600}, {0, 300}};
    const std::vector<double> toas(8, 0.0);
    PositionFix fix;
    EXPECT_NO_THROW(fix = position_from_toas(toas, anchors));
    EXPECT_TRUE(std::isfinite(fix.position.x));
}

TEST(PositionFromToas, TooFewUsableToas) {
    const std::vector<Position2D> anchors{{0, 0}, {800, 0}, {800, 600}};
    const std::vector<double> toas{1.0, std::nan(""), 2.0};
    try {
        position_from_toas(toas, anchors);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewAnchors);
    }
}

TEST(PositioningError, Examples) {
    EXPECT_EQ(positioning_error({1, 2}, {1, 2}), 0.0);
    EXPECT_EQ(positioning_error({3, 4}, {0, 0}), 5.0);
    Rng rng(36);
    for (int i = 0; i < 1000; ++i) {
        const Position2D a{rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3)}, b{rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3)};
        EXPECT_NEAR(positioning_error(a, b), std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)), 1e-12);
    }
}

TEST(SolverConfigTest, Validation) {
    SolverConfig c;
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.tol_cm = 0.0;
    EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace uwbpos

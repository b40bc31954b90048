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

// The two convolutional estimators: ANN_ToA maps one CIR window to a ToA
// offset, ANN_FP maps one window per anchor to a 2D position. Both share a
// two-branch topology (depth-1 and depth-4 conv blocks summed) followed by a
// conv block and a single fully connected layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwbpos/core.hpp"
#include "uwbpos/error.hpp"
#include "uwbpos/net/checkpoint.hpp"
#include "uwbpos/net/layers.hpp"
#include "uwbpos/net/network.hpp"

namespace uwbpos {

inline constexpr std::size_t kConvKernel = 5;
inline constexpr std::size_t kToaFilters = 16;
inline constexpr std::size_t kFpFilters = 32;
inline constexpr std::size_t kDeepBranchDepth = 4;

using Net = net::Network<float>;

template <class T>
net::Network<T> build_two_branch(std::size_t in_ch, std::size_t filters, std::size_t out_dim, std::uint64_t seed) {
    using namespace net;
    const auto conv_block = [](Sequential<T>& s, std::size_t in, std::size_t out) {
        s.template emplace<Conv1d<T>>(in, out, kConvKernel);
        s.template emplace<Relu<T>>();
    };
    Sequential<T> shallow, deep, body;
    conv_block(shallow, in_ch, filters);
    conv_block(deep, in_ch, filters);
    for (std::size_t i = 1; i < kDeepBranchDepth; ++i) conv_block(deep, filters, filters);
    body.template emplace<ParallelSum<T>>(std::move(shallow), std::move(deep));
    conv_block(body, filters, filters);
    body.template emplace<Flatten<T>>();
    body.template emplace<FullyConnected<T>>(filters * kWindowLength, out_dim);

    Network<T> n({in_ch, kWindowLength}, std::move(body));
    n.initialize(seed);
    // Zero head: an untrained model predicts the training-target mean.
    auto& head = static_cast<FullyConnected<T>&>(*n.body().layers().back());
    std::fill(head.weight().begin(), head.weight().end(), T{0});
    std::fill(head.bias().begin(), head.bias().end(), T{0});
    return n;
}

// Per-output affine scaling of regression targets.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(std::span<const std::vector<double>> targets) {
        require(!targets.empty(), ErrorCode::EmptyDataset, "cannot fit standardizer on empty targets");
        const std::size_t d = targets.front().size();
        Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        for (const auto& t : targets) {
            require(t.size() == d, ErrorCode::ShapeMismatch, "inconsistent target dimension");
            for (std::size_t i = 0; i < d; ++i) s.mean[i] += t[i];
        }
        for (double& m : s.mean) m /= static_cast<double>(targets.size());
        for (const auto& t : targets)
            for (std::size_t i = 0; i < d; ++i) s.stddev[i] += (t[i] - s.mean[i]) * (t[i] - s.mean[i]);
        for (double& v : s.stddev) {
            v = std::sqrt(v / static_cast<double>(targets.size()));
            if (!(v > 1e-9)) v = 1.0;
        }
        return s;
    }

    std::vector<float> forward(std::span<const double> y) const {
        std::vector<float> out(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<float>((y[i] - mean[i]) / stddev[i]);
        return out;
    }

    std::vector<double> inverse(std::span<const float> z) const {
        std::vector<double> out(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(z[i]) * stddev[i] + mean[i];
        return out;
    }
};

enum class ModelKind { AnnToa, AnnFp };

inline std::string to_string(ModelKind k) { return k == ModelKind::AnnToa ? "ann_toa" : "ann_fp"; }

struct AnnModel {
    ModelKind kind = ModelKind::AnnToa;
    Net net;
    Standardizer scaler;
    std::vector<int> anchor_order;  // ANN_FP input channel order
};

inline AnnModel build_ann_toa(std::uint64_t seed = 1) {
    AnnModel m;
    m.kind = ModelKind::AnnToa;
    m.net = build_two_branch<float>(1, kToaFilters, 1, seed);
    m.scaler = {{0.0}, {1.0}};
    return m;
}

inline AnnModel build_ann_fp(std::size_t n_anchors, std::uint64_t seed = 1) {
    require(n_anchors >= 1, ErrorCode::InvalidArgument, "fingerprinting needs at least one anchor");
    AnnModel m;
    m.kind = ModelKind::AnnFp;
    m.net = build_two_branch<float>(n_anchors, kFpFilters, 2, seed);
    m.scaler = {{0.0, 0.0}, {1.0, 1.0}};
    for (std::size_t i = 0; i < n_anchors; ++i) m.anchor_order.push_back(static_cast<int>(i));
    return m;
}

// One window per anchor, in the environment's fixed anchor order.
struct FingerprintSet {
    std::string env_id;
    int tag_id = 0;
    int rep_id = 0;
    std::vector<int> anchor_ids;
    std::vector<CirWindow> windows;
    Position2D tag_pos;
    bool complete = true;  // false when a channel was zero-filled
};

inline net::Tensor<float> toa_input(const CirWindow& w) {
    net::Tensor<float> x({1, kWindowLength});
    for (std::size_t i = 0; i < kWindowLength; ++i) x.data[i] = static_cast<float>(w.values[i]);
    return x;
}

inline net::Tensor<float> fp_input(const FingerprintSet& fp) {
    net::Tensor<float> x({fp.windows.size(), kWindowLength});
    for (std::size_t c = 0; c < fp.windows.size(); ++c)
        for (std::size_t i = 0; i < kWindowLength; ++i) x(c, i) = static_cast<float>(fp.windows[c].values[i]);
    return x;
}

// Window-relative ToA; add CirWindow::origin() for the raw index.
inline double estimate_toa(const AnnModel& m, const CirWindow& w) {
    require(m.kind == ModelKind::AnnToa, ErrorCode::ShapeMismatch, "model is not an ANN_ToA");
    const auto out = m.net.predict(toa_input(w));
    return m.scaler.inverse(out.data)[0];
}

inline std::vector<double> estimate_toa(const AnnModel& m, std::span<const CirWindow> ws) {
    std::vector<double> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(estimate_toa(m, w));
    return out;
}

inline Position2D estimate_position_fp(const AnnModel& m, const FingerprintSet& fp) {
    require(m.kind == ModelKind::AnnFp, ErrorCode::ShapeMismatch, "model is not an ANN_FP");
    if (fp.windows.size() != m.anchor_order.size() || fp.anchor_ids != m.anchor_order) {
        throw Error(ErrorCode::AnchorOrderMismatch,
                    "fingerprint has " + std::to_string(fp.windows.size()) + " channels, model expects " +
                        std::to_string(m.anchor_order.size()) + " in its recorded anchor order");
    }
    const auto out = m.net.predict(fp_input(fp));
    const auto xy = m.scaler.inverse(out.data);
    return {xy[0], xy[1]};
}

inline std::vector<Position2D> estimate_position_fp(const AnnModel& m, std::span<const FingerprintSet> fps) {
    std::vector<Position2D> out;
    out.reserve(fps.size());
    for (const auto& fp : fps) out.push_back(estimate_position_fp(m, fp));
    return out;
}

struct FitResult {
    AnnModel model;
    net::TrainHistory history;
};

namespace detail {

inline FitResult fit_model(AnnModel model, std::vector<net::Tensor<float>> inputs,
                           std::vector<std::vector<double>> targets, std::span<const std::size_t> train_idx,
                           std::span<const std::size_t> val_idx, const net::TrainConfig& cfg) {
    require(!train_idx.empty(), ErrorCode::EmptyDataset, "no training items");
    require(!val_idx.empty(), ErrorCode::EmptyDataset, "no validation items");
    std::vector<std::vector<double>> train_targets;
    for (auto i : train_idx) train_targets.push_back(targets.at(i));
    model.scaler = Standardizer::fit(train_targets);

    const auto make = [&](std::span<const std::size_t> idx) {
        std::vector<net::Sample<float>> out;
        out.reserve(idx.size());
        for (auto i : idx) {
            auto z = model.scaler.forward(targets.at(i));
            const net::Shape shape{z.size()};
            out.push_back({inputs.at(i), net::Tensor<float>(shape, std::move(z))});
        }
        return out;
    };
    const auto train_set = make(train_idx);
    const auto val_set = make(val_idx);
    auto hist = net::train<float>(model.net, train_set, val_set, cfg);
    return {std::move(model), std::move(hist)};
}

}  // namespace detail

// Trains on window-relative ToA labels; `train_idx` and `val_idx` index into
// `windows`/`labels`.
inline FitResult train_ann_toa(std::span<const CirWindow> windows, std::span<const double> labels,
                               std::span<const std::size_t> train_idx, std::span<const std::size_t> val_idx,
                               const net::TrainConfig& cfg) {
    require(windows.size() == labels.size(), ErrorCode::ShapeMismatch, "one label per window required");
    std::vector<net::Tensor<float>> inputs;
    std::vector<std::vector<double>> targets;
    inputs.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        inputs.push_back(toa_input(windows[i]));
        targets.push_back({labels[i]});
    }
    return detail::fit_model(build_ann_toa(cfg.seed), std::move(inputs), std::move(targets), train_idx, val_idx,
                             cfg);
}

inline FitResult train_ann_fp(std::span<const FingerprintSet> sets, std::span<const std::size_t> train_idx,
                              std::span<const std::size_t> val_idx, const net::TrainConfig& cfg) {
    require(!sets.empty(), ErrorCode::EmptyDataset, "no fingerprint sets");
    AnnModel model = build_ann_fp(sets.front().windows.size(), cfg.seed);
    model.anchor_order = sets.front().anchor_ids;
    std::vector<net::Tensor<float>> inputs;
    std::vector<std::vector<double>> targets;
    for (const auto& s : sets) {
        require(s.anchor_ids == model.anchor_order, ErrorCode::AnchorOrderMismatch,
                "fingerprint sets disagree on anchor order");
        inputs.push_back(fp_input(s));
        targets.push_back({s.tag_pos.x, s.tag_pos.y});
    }
    return detail::fit_model(std::move(model), std::move(inputs), std::move(targets), train_idx, val_idx, cfg);
}

inline nlohmann::json model_to_json(const AnnModel& m) {
    nlohmann::json meta;
    meta["model"] = to_string(m.kind);
    meta["target_mean"] = m.scaler.mean;
    meta["target_std"] = m.scaler.stddev;
    meta["anchor_order"] = m.anchor_order;
    return net::to_json(m.net, meta);
}

inline AnnModel model_from_json(const nlohmann::json& j) {
    AnnModel m;
    m.net = net::network_from_json<float>(j);
    try {
        const auto& meta = j.at("metadata");
        const auto kind = meta.at("model").get<std::string>();
        require(kind == "ann_toa" || kind == "ann_fp", ErrorCode::SchemaMismatch, "unknown model '" + kind + "'");
        m.kind = kind == "ann_toa" ? ModelKind::AnnToa : ModelKind::AnnFp;
        m.scaler.mean = meta.at("target_mean").get<std::vector<double>>();
        m.scaler.stddev = meta.at("target_std").get<std::vector<double>>();
        m.anchor_order = meta.at("anchor_order").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("model metadata: ") + e.what());
    }
    return m;
}

inline void save_model(const std::string& path, const AnnModel& m) { net::write_json_file(path, model_to_json(m)); }
inline AnnModel load_model(const std::string& path) { return model_from_json(net::read_json_file(path)); }

}  // namespace uwbpos

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

// Portable JSON checkpoints.
//
//   {
//     "format": "uwbpos-network", "version": 1,
//     "input_shape": [channels, length],
//     "layers": [ <layer>, ... ],
//     "metadata": { ... }            // free-form, owned by the caller
//   }
//
// <layer> is one of
//   {"kind": "conv1d", "in_ch", "out_ch", "kernel", "weight", "bias"}
//       weight index = (out * in_ch + in) * kernel + k
//   {"kind": "fully_connected", "in_dim", "out_dim", "weight", "bias"}
//       weight index = out * in_dim + in
//   {"kind": "relu"} | {"kind": "flatten"}
//   {"kind": "parallel_sum", "branches": [[<layer>...], [<layer>...]]}
//
// Numbers are written in shortest round-trip form; optimizer state is not stored.

#include <fstream>
#include <string>

#include <json.hpp>

#include "uwbpos/error.hpp"
#include "uwbpos/net/layers.hpp"
#include "uwbpos/net/network.hpp"

namespace uwbpos::net {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class T>
nlohmann::json layers_to_json(const Sequential<T>& seq) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : seq.layers()) {
        nlohmann::json j;
        j["kind"] = to_string(l->kind());
        switch (l->kind()) {
            case LayerKind::Conv1d: {
                const auto& c = static_cast<const Conv1d<T>&>(*l);
                j["in_ch"] = c.in_channels();
                j["out_ch"] = c.out_channels();
                j["kernel"] = c.kernel();
                j["weight"] = c.weight();
                j["bias"] = c.bias();
                break;
            }
            case LayerKind::FullyConnected: {
                const auto& f = static_cast<const FullyConnected<T>&>(*l);
                j["in_dim"] = f.in_dim();
                j["out_dim"] = f.out_dim();
                j["weight"] = f.weight();
                j["bias"] = f.bias();
                break;
            }
            case LayerKind::ParallelSum: {
                const auto& p = static_cast<const ParallelSum<T>&>(*l);
                j["branches"] = {layers_to_json(p.branch_a()), layers_to_json(p.branch_b())};
                break;
            }
            case LayerKind::Sequential:
                throw Error(ErrorCode::InvalidArgument, "nested sequential layers are not serializable");
            default:
                break;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

template <class T>
void load_values(const nlohmann::json& j, const char* key, std::vector<T>& dst) {
    const auto& src = j.at(key);
    require(src.is_array() && src.size() == dst.size(), ErrorCode::SchemaMismatch,
            std::string("checkpoint field '") + key + "' has " + std::to_string(src.size()) + " values, expected " +
                std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i].get<double>());
}

template <class T>
Sequential<T> layers_from_json(const nlohmann::json& arr) {
    require(arr.is_array(), ErrorCode::SchemaMismatch, "checkpoint layers must be an array");
    Sequential<T> seq;
    for (const auto& j : arr) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "conv1d") {
            auto c = std::make_unique<Conv1d<T>>(j.at("in_ch").get<std::size_t>(), j.at("out_ch").get<std::size_t>(),
                                                 j.at("kernel").get<std::size_t>());
            load_values(j, "weight", c->weight());
            load_values(j, "bias", c->bias());
            seq.add(std::move(c));
        } else if (kind == "fully_connected") {
            auto f = std::make_unique<FullyConnected<T>>(j.at("in_dim").get<std::size_t>(),
                                                         j.at("out_dim").get<std::size_t>());
            load_values(j, "weight", f->weight());
            load_values(j, "bias", f->bias());
            seq.add(std::move(f));
        } else if (kind == "relu") {
            seq.template emplace<Relu<T>>();
        } else if (kind == "flatten") {
            seq.template emplace<Flatten<T>>();
        } else if (kind == "parallel_sum") {
            const auto& br = j.at("branches");
            require(br.is_array() && br.size() == 2, ErrorCode::SchemaMismatch, "parallel_sum needs two branches");
            seq.template emplace<ParallelSum<T>>(layers_from_json<T>(br[0]), layers_from_json<T>(br[1]));
        } else {
            throw Error(ErrorCode::SchemaMismatch, "unknown layer kind '" + kind + "'");
        }
    }
    return seq;
}

}  // namespace detail

template <class T>
nlohmann::json to_json(const Network<T>& net, const nlohmann::json& metadata = nlohmann::json::object()) {
    nlohmann::json j;
    j["format"] = "uwbpos-network";
    j["version"] = kCheckpointVersion;
    j["input_shape"] = net.input_shape();
    j["layers"] = detail::layers_to_json(net.body());
    j["metadata"] = metadata;
    return j;
}

template <class T>
Network<T> network_from_json(const nlohmann::json& j) {
    try {
        require(j.at("format").get<std::string>() == "uwbpos-network", ErrorCode::SchemaMismatch,
                "not a network checkpoint");
        const int version = j.at("version").get<int>();
        require(version == kCheckpointVersion, ErrorCode::SchemaMismatch,
                "unsupported checkpoint version " + std::to_string(version));
        return Network<T>(j.at("input_shape").get<Shape>(), detail::layers_from_json<T>(j.at("layers")));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("malformed checkpoint: ") + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, path + ": " + e.what());
    }
}

}  // namespace uwbpos::net

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

#include <stdexcept>
#include <string>
#include <string_view>

namespace uwbpos {

enum class ErrorCode {
    InvalidArgument,
    AllZeroCir,
    MissingLabel,
    DelayOutOfRange,
    NoPeakFound,
    NoEdgeFound,
    EmptyGrid,
    ShapeMismatch,
    NoForwardCache,
    EmptyDataset,
    AnchorOrderMismatch,
    TooFewAnchors,
    DegenerateGeometry,
    SingularUpdate,
    SchemaMismatch,
    MissingArtifacts,
    EmptySamples,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::AllZeroCir: return "AllZeroCir";
        case ErrorCode::MissingLabel: return "MissingLabel";
        case ErrorCode::DelayOutOfRange: return "DelayOutOfRange";
        case ErrorCode::NoPeakFound: return "NoPeakFound";
        case ErrorCode::NoEdgeFound: return "NoEdgeFound";
        case ErrorCode::EmptyGrid: return "EmptyGrid";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NoForwardCache: return "NoForwardCache";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::AnchorOrderMismatch: return "AnchorOrderMismatch";
        case ErrorCode::TooFewAnchors: return "TooFewAnchors";
        case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
        case ErrorCode::SingularUpdate: return "SingularUpdate";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::MissingArtifacts: return "MissingArtifacts";
        case ErrorCode::EmptySamples: return "EmptySamples";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

}  // namespace uwbpos

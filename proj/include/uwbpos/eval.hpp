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

// Error statistics and report files: percentiles, empirical CDFs and
// per-method reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uwbpos/error.hpp"

namespace uwbpos {

inline constexpr const char* kPercentileConvention = "linear interpolation between closest ranks, rank = p/100*(n-1)";

// Percentile of `samples` (p in [0, 100]) with linear interpolation between
// the two closest ranks of the sorted sample.
inline double percentile_sorted(std::span<const double> sorted, double p) {
    require(!sorted.empty(), ErrorCode::EmptySamples, "percentile of an empty sample");
    require(p >= 0.0 && p <= 100.0, ErrorCode::InvalidArgument, "percentile must be in [0, 100]");
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::span<const double> samples, double p) {
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    return percentile_sorted(s, p);
}

struct CdfPoint {
    double error = 0.0;
    double fraction = 0.0;
};

// Empirical CDF: the i-th smallest error (0-based) maps to (i + 1) / n.
inline std::vector<CdfPoint> empirical_cdf(std::span<const double> samples) {
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    std::vector<CdfPoint> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.push_back({s[i], static_cast<double>(i + 1) / static_cast<double>(s.size())});
    }
    return out;
}

struct EvalReport {
    std::string method;
    std::string env;
    int rep = 0;
    std::uint64_t seed = 0;
    std::vector<double> errors;  // cm, in evaluation order
    double p50 = 0, p90 = 0, p95 = 0;
    double mean_abs = 0;
    std::vector<CdfPoint> cdf;
};

inline EvalReport make_report(std::string method, std::string env, int rep, std::uint64_t seed,
                              std::vector<double> errors) {
    require(!errors.empty(), ErrorCode::EmptySamples, "no errors for method " + method);
    EvalReport r;
    r.method = std::move(method);
    r.env = std::move(env);
    r.rep = rep;
    r.seed = seed;
    r.errors = std::move(errors);
    std::vector<double> sorted = r.errors;
    std::sort(sorted.begin(), sorted.end());
    r.p50 = percentile_sorted(sorted, 50);
    r.p90 = percentile_sorted(sorted, 90);
    r.p95 = percentile_sorted(sorted, 95);
    double acc = 0.0;
    for (double e : r.errors) acc += std::abs(e);
    r.mean_abs = acc / static_cast<double>(r.errors.size());
    r.cdf = empirical_cdf(r.errors);
    return r;
}

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

// Report file: '#' metadata lines, then one error per line in evaluation order.
inline void write_report(const std::string& path, const EvalReport& r) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "# method\t" << r.method << '\n'
        << "# env\t" << r.env << '\n'
        << "# rep\t" << r.rep << '\n'
        << "# seed\t" << r.seed << '\n'
        << "# percentile\t" << kPercentileConvention << '\n'
        << "# n\t" << r.errors.size() << '\n'
        << "# p50_cm\t" << fixed(r.p50) << '\n'
        << "# p90_cm\t" << fixed(r.p90) << '\n'
        << "# p95_cm\t" << fixed(r.p95) << '\n'
        << "# mean_abs_cm\t" << fixed(r.mean_abs) << '\n'
        << "error_cm\n";
    for (double e : r.errors) out << fixed(e, 6) << '\n';
}

inline EvalReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "cannot open report " + path);
    std::map<std::string, std::string> meta;
    std::vector<double> errors;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto tab = line.find('\t');
            if (tab != std::string::npos) meta[line.substr(2, tab - 2)] = line.substr(tab + 1);
            continue;
        }
        if (line == "error_cm") continue;
        errors.push_back(std::stod(line));
    }
    return make_report(meta["method"], meta["env"], std::stoi(meta.count("rep") ? meta["rep"] : "0"),
                       std::stoull(meta.count("seed") ? meta["seed"] : "0"), std::move(errors));
}

// Two columns: error_cm and cumulative fraction.
inline void write_cdf(const std::string& path, std::span<const CdfPoint> cdf) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "error_cm\tcdf\n";
    for (const auto& p : cdf) out << fixed(p.error, 6) << '\t' << fixed(p.fraction, 6) << '\n';
}

}  // namespace uwbpos

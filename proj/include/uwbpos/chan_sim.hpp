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

// Synthetic multipath CIR generator. A CIR is the magnitude of a sum of
// delayed, scaled pulses sampled on the device time grid; NLOS links get an
// attenuated direct path and a delayed dominant cluster so that the emulated
// device ranging error is positively biased.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "uwbpos/core.hpp"
#include "uwbpos/error.hpp"
#include "uwbpos/kv_config.hpp"
#include "uwbpos/rng.hpp"
#include "uwbpos/toa_conv.hpp"

namespace uwbpos {

struct PathComponent {
    double amplitude = 1.0;  // |a_i|
    double delay_ns = 0.0;   // tau_i
};

enum class PulseKind { Gaussian, RaisedCosine };

struct PulseShape {
    PulseKind kind = PulseKind::Gaussian;
    // Gaussian: standard deviation. Raised cosine: symbol period T.
    double width_ns = 0.0;

    // Gaussian whose baseband -3 dB point sits at half the RF bandwidth.
    static PulseShape bandwidth_matched(double rf_bandwidth_mhz = 499.2) {
        const double f3db_ghz = 0.5 * rf_bandwidth_mhz * 1e-3;
        return {PulseKind::Gaussian, std::sqrt(std::numbers::ln2) / (2.0 * std::numbers::pi * f3db_ghz)};
    }

    void validate() const {
        require(width_ns > 0.0 && std::isfinite(width_ns), ErrorCode::InvalidArgument,
                "pulse width must be positive");
    }

    // Half-width beyond which the pulse is treated as zero.
    double support_ns() const { return kind == PulseKind::Gaussian ? 9.0 * width_ns : 24.0 * width_ns; }

    double operator()(double t_ns) const {
        if (kind == PulseKind::Gaussian) {
            const double u = t_ns / width_ns;
            return std::exp(-0.5 * u * u);
        }
        constexpr double rolloff = 0.5;
        const double u = t_ns / width_ns;
        const double denom = 1.0 - (2.0 * rolloff * u) * (2.0 * rolloff * u);
        const auto sinc = [](double x) {
            return x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        };
        if (std::abs(denom) < 1e-12) return std::numbers::pi / 4.0 * sinc(1.0 / (2.0 * rolloff));
        return sinc(u) * std::cos(std::numbers::pi * rolloff * u) / denom;
    }
};

// Magnitude of the superposed pulses on an n_samples grid, plus clipped
// white noise scaled by `noise_floor` times the strongest path amplitude.
inline std::vector<double> render_cir(std::span<const PathComponent> paths, const PulseShape& pulse,
                                      std::size_t n_samples, double noise_floor, Rng& rng,
                                      double dt_ns = 1.0) {
    require(!paths.empty(), ErrorCode::InvalidArgument, "no path components");
    require(n_samples > 0, ErrorCode::InvalidArgument, "n_samples must be positive");
    require(noise_floor >= 0.0, ErrorCode::InvalidArgument, "noise floor must be non-negative");
    pulse.validate();
    const double span_ns = static_cast<double>(n_samples) * dt_ns;

    std::vector<double> s(n_samples, 0.0);
    double strongest = 0.0;
    for (const auto& p : paths) {
        require(p.amplitude > 0.0 && std::isfinite(p.amplitude), ErrorCode::InvalidArgument,
                "path amplitude must be positive");
        require(p.delay_ns >= 0.0, ErrorCode::InvalidArgument, "path delay must be non-negative");
        if (p.delay_ns >= span_ns) {
            throw Error(ErrorCode::DelayOutOfRange, "path delay " + std::to_string(p.delay_ns) +
                                                        " ns beyond buffer of " + std::to_string(span_ns) + " ns");
        }
        strongest = std::max(strongest, p.amplitude);
        const double reach = pulse.support_ns();
        const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil((p.delay_ns - reach) / dt_ns)));
        const auto hi = static_cast<std::size_t>(
            std::min(static_cast<double>(n_samples - 1), std::floor((p.delay_ns + reach) / dt_ns)));
        for (std::size_t k = lo; k <= hi; ++k) {
            s[k] += p.amplitude * pulse(static_cast<double>(k) * dt_ns - p.delay_ns);
        }
    }
    for (double& v : s) v = std::abs(v);
    if (noise_floor > 0.0) {
        const double sigma = noise_floor * strongest;
        for (double& v : s) v = std::max(0.0, v + sigma * rng.normal());
    }
    return s;
}

struct Scenario {
    std::string env_id = "synthetic";
    std::vector<Position2D> anchors;
    std::vector<Position2D> tag_points;
    int n_reps = 1;

    double nlos_prob = 0.0;
    double nlos_excess_delay_mean_ns = 5.0;
    double nlos_excess_delay_std_ns = 1.5;
    double nlos_first_path_atten_db = 20.0;

    int n_paths = 1;                 // multipath components including the dominant one
    double mp_mean_spacing_ns = 3.0; // mean inter-arrival of later components
    double mp_decay_ns = 15.0;       // amplitude e-folding in excess delay
    double mp_gain = 0.7;            // upper bound of a later component relative to the dominant one

    double noise_floor = 0.0;
    std::size_t n_samples = 1016;
    PulseShape pulse = PulseShape::bandwidth_matched();
    PhysConstants phys;
    std::uint64_t seed = 1;

    void validate() const {
        phys.validate();
        pulse.validate();
        require(!anchors.empty(), ErrorCode::InvalidArgument, "scenario has no anchors");
        require(nlos_prob >= 0.0 && nlos_prob <= 1.0, ErrorCode::InvalidArgument, "nlos_prob must be in [0,1]");
        require(nlos_excess_delay_std_ns >= 0.0, ErrorCode::InvalidArgument, "negative excess-delay spread");
        require(nlos_excess_delay_mean_ns > 0.0, ErrorCode::InvalidArgument,
                "NLOS excess delay mean must be positive");
        require(nlos_first_path_atten_db >= 0.0, ErrorCode::InvalidArgument, "negative NLOS attenuation");
        require(n_paths >= 1, ErrorCode::InvalidArgument, "n_paths must be >= 1");
        require(mp_mean_spacing_ns > 0.0 && mp_decay_ns > 0.0, ErrorCode::InvalidArgument,
                "multipath spacing and decay must be positive");
        require(mp_gain > 0.0, ErrorCode::InvalidArgument, "mp_gain must be positive");
        require(noise_floor >= 0.0, ErrorCode::InvalidArgument, "noise floor must be non-negative");
        require(n_samples > 0, ErrorCode::InvalidArgument, "n_samples must be positive");
        require(n_reps >= 1, ErrorCode::InvalidArgument, "n_reps must be >= 1");
    }

    std::size_t record_count() const { return anchors.size() * tag_points.size() * static_cast<std::size_t>(n_reps); }
};

struct SynthRecord {
    CirRecord record;
    double true_toa = 0.0;  // fractional sample index
    bool is_nlos = false;
};

// Device first-path emulation.
inline constexpr double kDeviceEmulationBeta = 0.2;

inline SynthRecord simulate_link(Position2D anchor, Position2D tag, const Scenario& sc, Rng& rng) {
    const double dist = distance(anchor, tag);
    const double tof_ns = dist / sc.phys.c_cm_per_ns;

    SynthRecord out;
    out.true_toa = dist / sc.phys.cm_per_sample();
    out.is_nlos = rng.uniform() < sc.nlos_prob;

    std::vector<PathComponent> paths;
    double cluster_start = tof_ns;
    if (out.is_nlos) {
        paths.push_back({std::pow(10.0, -sc.nlos_first_path_atten_db / 20.0), tof_ns});
        double bias;
        do {
            bias = rng.normal(sc.nlos_excess_delay_mean_ns, sc.nlos_excess_delay_std_ns);
        } while (!(bias > 0.0));
        cluster_start = tof_ns + bias;
    }
    paths.push_back({1.0, cluster_start});
    double excess = 0.0;
    for (int i = 1; i < sc.n_paths; ++i) {
        excess += rng.exponential(sc.mp_mean_spacing_ns);
        const double amp = sc.mp_gain * std::exp(-excess / sc.mp_decay_ns) * rng.uniform(0.2, 1.0);
        const double delay = cluster_start + excess;
        if (delay < static_cast<double>(sc.n_samples) * sc.phys.dt_ns) paths.push_back({amp, delay});
    }

    auto& rec = out.record;
    rec.env_id = sc.env_id;
    rec.anchor_pos = anchor;
    rec.tag_pos = tag;
    rec.samples = render_cir(paths, sc.pulse, sc.n_samples, sc.noise_floor, rng, sc.phys.dt_ns);
    rec.first_path_idx = peak_index(rec.samples, PeakParams{kDeviceEmulationBeta});
    rec.toa_dwm = static_cast<double>(rec.first_path_idx);
    rec.range_err_cm = toa_to_range(rec.toa_dwm, sc.phys) - dist;
    return out;
}

struct SynthCorpus {
    std::vector<SynthRecord> records;  // ordered by (tag, rep, anchor)
    // Indices into `records`, one group per (tag point, repetition), anchors in order.
    std::vector<std::vector<std::size_t>> fingerprint_sets;
};

inline SynthCorpus generate_corpus(const Scenario& sc) {
    sc.validate();
    SynthCorpus corpus;
    corpus.records.reserve(sc.record_count());
    for (std::size_t t = 0; t < sc.tag_points.size(); ++t) {
        for (int rep = 0; rep < sc.n_reps; ++rep) {
            std::vector<std::size_t> set;
            for (std::size_t a = 0; a < sc.anchors.size(); ++a) {
                Rng rng(derive_seed(sc.seed, a, t, rep));
                auto r = simulate_link(sc.anchors[a], sc.tag_points[t], sc, rng);
                r.record.anchor_id = static_cast<int>(a);
                r.record.tag_id = static_cast<int>(t);
                r.record.rep_id = rep;
                set.push_back(corpus.records.size());
                corpus.records.push_back(std::move(r));
            }
            corpus.fingerprint_sets.push_back(std::move(set));
        }
    }
    return corpus;
}

// Eight anchors on the boundary of a width x height room (cm).
inline std::vector<Position2D> perimeter_anchors(double width, double height) {
    return {{0, 0},         {width / 2, 0},      {width, 0},          {width, height / 2},
            {width, height}, {width / 2, height}, {0, height},         {0, height / 2}};
}

inline std::vector<Position2D> random_tag_points(std::size_t count, double width, double height,
                                                 double margin, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7a6));
    std::vector<Position2D> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        pts.push_back({rng.uniform(margin, width - margin), rng.uniform(margin, height - margin)});
    }
    return pts;
}

// Four synthetic environments of increasing size, NLOS share and multipath
// density. Absolute error levels are not calibrated to any measurement.
inline Scenario environment_preset(const std::string& name) {
    Scenario sc;
    sc.env_id = name;
    sc.n_samples = 256;
    sc.n_reps = 30;
    double w = 0, h = 0;
    if (name == "apartment") {
        w = 800, h = 600;
        sc.nlos_prob = 0.3, sc.nlos_excess_delay_mean_ns = 3.0, sc.nlos_excess_delay_std_ns = 1.0;
        sc.nlos_first_path_atten_db = 16.0, sc.n_paths = 8, sc.mp_mean_spacing_ns = 2.5;
        sc.noise_floor = 0.04;
    } else if (name == "house") {
        w = 1200, h = 1000;
        sc.nlos_prob = 0.45, sc.nlos_excess_delay_mean_ns = 4.0, sc.nlos_excess_delay_std_ns = 1.5;
        sc.nlos_first_path_atten_db = 17.0, sc.n_paths = 10, sc.mp_mean_spacing_ns = 2.0;
        sc.noise_floor = 0.045;
    } else if (name == "office") {
        w = 1600, h = 1200;
        sc.nlos_prob = 0.55, sc.nlos_excess_delay_mean_ns = 5.0, sc.nlos_excess_delay_std_ns = 2.0;
        sc.nlos_first_path_atten_db = 18.0, sc.n_paths = 12, sc.mp_mean_spacing_ns = 1.8;
        sc.noise_floor = 0.05;
    } else if (name == "industrial") {
        w = 2000, h = 1600;
        sc.nlos_prob = 0.65, sc.nlos_excess_delay_mean_ns = 6.0, sc.nlos_excess_delay_std_ns = 2.5;
        sc.nlos_first_path_atten_db = 18.0, sc.n_paths = 16, sc.mp_mean_spacing_ns = 1.5;
        sc.mp_gain = 0.7, sc.noise_floor = 0.05;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown environment preset '" + name + "'");
    }
    sc.anchors = perimeter_anchors(w, h);
    sc.tag_points = random_tag_points(80, w, h, 50.0, derive_seed(0x5eed, name.size(), name.front()));
    return sc;
}

inline const std::vector<std::string>& environment_names() {
    static const std::vector<std::string> names{"apartment", "house", "office", "industrial"};
    return names;
}

namespace detail {

inline std::vector<Position2D> parse_points(const std::string& text, const std::string& key) {
    std::vector<Position2D> pts;
    for (const auto& item : split_string(text, ';')) {
        if (item.empty()) continue;
        const auto xy = split_string(item, ',');
        require(xy.size() == 2, ErrorCode::InvalidArgument, key + ": expected 'x,y' but got '" + item + "'");
        pts.push_back({parse_double(xy[0], key), parse_double(xy[1], key)});
    }
    return pts;
}

}  // namespace detail

// Scenario from a key-value config. `preset` selects a base environment;
// every other key overrides a field. Tag points come from `tag_points`
// (x,y;x,y;...) or `tag_random = count, width, height` (uniform, 50 cm margin).
inline Scenario scenario_from_config(const KeyValueConfig& cfg) {
    Scenario sc;
    if (auto preset = cfg.find("preset")) sc = environment_preset(*preset);
    sc.env_id = cfg.get("env_id", sc.env_id);
    if (auto a = cfg.find("anchors")) sc.anchors = detail::parse_points(*a, "anchors");
    if (auto t = cfg.find("tag_points")) sc.tag_points = detail::parse_points(*t, "tag_points");
    sc.seed = static_cast<std::uint64_t>(cfg.get("seed", static_cast<long long>(sc.seed)));
    if (auto t = cfg.find("tag_random")) {
        const auto parts = split_string(*t, ',');
        require(parts.size() == 3, ErrorCode::InvalidArgument, "tag_random expects 'count, width, height'");
        sc.tag_points = random_tag_points(static_cast<std::size_t>(parse_int(parts[0], "tag_random")),
                                          parse_double(parts[1], "tag_random"),
                                          parse_double(parts[2], "tag_random"), 50.0, sc.seed);
    }
    sc.n_reps = cfg.get("n_reps", sc.n_reps);
    sc.nlos_prob = cfg.get("nlos_prob", sc.nlos_prob);
    sc.nlos_excess_delay_mean_ns = cfg.get("nlos_excess_delay_mean_ns", sc.nlos_excess_delay_mean_ns);
    sc.nlos_excess_delay_std_ns = cfg.get("nlos_excess_delay_std_ns", sc.nlos_excess_delay_std_ns);
    sc.nlos_first_path_atten_db = cfg.get("nlos_first_path_atten_db", sc.nlos_first_path_atten_db);
    sc.n_paths = cfg.get("n_paths", sc.n_paths);
    sc.mp_mean_spacing_ns = cfg.get("mp_mean_spacing_ns", sc.mp_mean_spacing_ns);
    sc.mp_decay_ns = cfg.get("mp_decay_ns", sc.mp_decay_ns);
    sc.mp_gain = cfg.get("mp_gain", sc.mp_gain);
    sc.noise_floor = cfg.get("noise_floor", sc.noise_floor);
    sc.n_samples = static_cast<std::size_t>(cfg.get("n_samples", static_cast<long long>(sc.n_samples)));
    sc.phys.dt_ns = cfg.get("dt_ns", sc.phys.dt_ns);
    if (auto kind = cfg.find("pulse")) {
        if (*kind == "gaussian") {
            sc.pulse.kind = PulseKind::Gaussian;
        } else if (*kind == "raised_cosine") {
            sc.pulse.kind = PulseKind::RaisedCosine;
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown pulse '" + *kind + "'");
        }
    }
    sc.pulse.width_ns = cfg.get("pulse_width_ns", sc.pulse.width_ns);
    sc.validate();
    return sc;
}

}  // namespace uwbpos

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

// Canonical CIR record files, the public-dataset adapter, labeled dataset
// assembly and train/validation/test splits.
//
// Canonical file layout (comma separated, one record per line):
//
//   #uwbpos-cir,version=1,n_raw=<N>
//   env_id,anchor_id,tag_id,rep_id,anchor_x,anchor_y,tag_x,tag_y,first_path_idx,toa_dwm,range_err_cm,s0,...,s<N-1>
//   <rows>
//
// Positions are cm, first_path_idx/toa_dwm are sample indices, an empty
// range_err_cm marks an unlabeled record. Reals use the shortest decimal
// form that parses back to the same double.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "uwbpos/core.hpp"
#include "uwbpos/error.hpp"
#include "uwbpos/kv_config.hpp"
#include "uwbpos/models.hpp"
#include "uwbpos/rng.hpp"

namespace uwbpos {

inline constexpr int kCanonicalVersion = 1;
inline constexpr const char* kCanonicalMagic = "#uwbpos-cir";

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error(ErrorCode::Io, "cannot format number");
    return std::string(buf, ptr);
}

struct SkippedRow {
    std::string file;
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<CirRecord> records;
    std::vector<SkippedRow> skipped;
    std::map<std::string, std::size_t> counts_per_env;

    bool partial() const { return !skipped.empty(); }
};

// Canonical sort order: (env, tag, rep, anchor).
inline void sort_canonical(std::vector<CirRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const CirRecord& a, const CirRecord& b) {
        return std::tie(a.env_id, a.tag_id, a.rep_id, a.anchor_id) < std::tie(b.env_id, b.tag_id, b.rep_id, b.anchor_id);
    });
}

inline void write_canonical(std::ostream& out, const std::vector<CirRecord>& records) {
    const std::size_t n_raw = records.empty() ? 0 : records.front().samples.size();
    out << kCanonicalMagic << ",version=" << kCanonicalVersion << ",n_raw=" << n_raw << '\n';
    out << "env_id,anchor_id,tag_id,rep_id,anchor_x,anchor_y,tag_x,tag_y,first_path_idx,toa_dwm,range_err_cm";
    for (std::size_t i = 0; i < n_raw; ++i) out << ",s" << i;
    out << '\n';
    std::string line;
    for (const auto& r : records) {
        require(r.samples.size() == n_raw, ErrorCode::SchemaMismatch,
                "all records in a canonical file must have " + std::to_string(n_raw) + " samples");
        require(r.env_id.find_first_of(",\n") == std::string::npos, ErrorCode::InvalidArgument,
                "env_id may not contain ',' or newlines");
        line.clear();
        line += r.env_id;
        for (int v : {r.anchor_id, r.tag_id, r.rep_id}) line += ',' + std::to_string(v);
        for (double v : {r.anchor_pos.x, r.anchor_pos.y, r.tag_pos.x, r.tag_pos.y}) line += ',' + format_double(v);
        line += ',' + std::to_string(r.first_path_idx);
        line += ',' + format_double(r.toa_dwm);
        line += ',';
        if (r.range_err_cm) line += format_double(*r.range_err_cm);
        for (double s : r.samples) line += ',' + format_double(s);
        line += '\n';
        out << line;
    }
}

inline void write_canonical_file(const std::string& path, const std::vector<CirRecord>& records) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    write_canonical(out, records);
}

inline IngestResult read_canonical(std::istream& in, const std::string& name = "<stream>") {
    IngestResult res;
    std::string line;
    if (!std::getline(in, line)) return res;
    const auto meta = split_string(line, ',');
    if (meta.empty() || meta[0] != kCanonicalMagic) {
        throw Error(ErrorCode::SchemaMismatch, name + ": missing '" + kCanonicalMagic + "' header");
    }
    int version = -1;
    long long n_raw = -1;
    for (std::size_t i = 1; i < meta.size(); ++i) {
        const auto kv = split_string(meta[i], '=');
        if (kv.size() != 2) continue;
        if (kv[0] == "version") version = static_cast<int>(parse_int(kv[1], "version"));
        if (kv[0] == "n_raw") n_raw = parse_int(kv[1], "n_raw");
    }
    require(version == kCanonicalVersion, ErrorCode::SchemaMismatch,
            name + ": unsupported schema version " + std::to_string(version));
    require(n_raw >= 0, ErrorCode::SchemaMismatch, name + ": header lacks n_raw");
    if (!std::getline(in, line)) return res;  // column names
    const std::size_t expected = 11 + static_cast<std::size_t>(n_raw);

    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split_string(line, ',');
        if (f.size() != expected) {
            res.skipped.push_back({name, lineno, "expected " + std::to_string(expected) + " fields, found " +
                                                     std::to_string(f.size())});
            continue;
        }
        try {
            CirRecord r;
            r.env_id = f[0];
            r.anchor_id = static_cast<int>(parse_int(f[1], "anchor_id"));
            r.tag_id = static_cast<int>(parse_int(f[2], "tag_id"));
            r.rep_id = static_cast<int>(parse_int(f[3], "rep_id"));
            r.anchor_pos = {parse_double(f[4], "anchor_x"), parse_double(f[5], "anchor_y")};
            r.tag_pos = {parse_double(f[6], "tag_x"), parse_double(f[7], "tag_y")};
            r.first_path_idx = static_cast<int>(parse_int(f[8], "first_path_idx"));
            r.toa_dwm = parse_double(f[9], "toa_dwm");
            if (!f[10].empty()) r.range_err_cm = parse_double(f[10], "range_err_cm");
            r.samples.resize(static_cast<std::size_t>(n_raw));
            for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = parse_double(f[11 + i], "sample");
            r.validate();
            ++res.counts_per_env[r.env_id];
            res.records.push_back(std::move(r));
        } catch (const Error& e) {
            res.skipped.push_back({name, lineno, e.what()});
        }
    }
    return res;
}

inline IngestResult read_canonical_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "cannot open corpus " + path);
    return read_canonical(in, path);
}

// Column mapping for external CSV datasets. Keys of the adapter config:
//   delimiter            field separator (default ',')
//   extension            files considered in the directory (default .csv)
//   env                  fixed environment label; otherwise col.env, else the file stem
//   position_scale       multiplier to cm (default 100, i.e. metres)
//   col.<field>          source column for anchor_id, tag_id, rep_id, anchor_x,
//                        anchor_y, tag_x, tag_y, toa_dwm, first_path_idx,
//                        range_err_cm, range_cm, env
//   cir_prefix           magnitude columns <prefix>0..<prefix>N-1, or
//   cir_real_prefix / cir_imag_prefix for complex samples
//   n_raw                number of CIR samples (default 1016)
//   toa_scale            multiplier from the source ToA unit to samples (default 1)
// Missing rep_id is assigned by occurrence order per (env, anchor, tag);
// missing first_path_idx is floor(toa_dwm); missing range_err_cm is derived
// from range_cm minus the anchor-tag distance when range_cm is mapped.
struct AdapterConfig {
    char delimiter = ',';
    std::string extension = ".csv";
    std::optional<std::string> env;
    double position_scale = 100.0;
    double toa_scale = 1.0;
    std::map<std::string, std::string> columns;
    std::string cir_prefix = "CIR";
    std::string cir_real_prefix;
    std::string cir_imag_prefix;
    std::size_t n_raw = 1016;

    static AdapterConfig from_config(const KeyValueConfig& cfg) {
        AdapterConfig a;
        const auto delim = cfg.get("delimiter", std::string(","));
        a.delimiter = delim == "tab" ? '\t' : (delim.empty() ? ',' : delim.front());
        a.extension = cfg.get("extension", a.extension);
        a.env = cfg.find("env");
        a.position_scale = cfg.get("position_scale", a.position_scale);
        a.toa_scale = cfg.get("toa_scale", a.toa_scale);
        a.cir_prefix = cfg.get("cir_prefix", a.cir_prefix);
        a.cir_real_prefix = cfg.get("cir_real_prefix", std::string());
        a.cir_imag_prefix = cfg.get("cir_imag_prefix", std::string());
        a.n_raw = static_cast<std::size_t>(cfg.get("n_raw", static_cast<long long>(a.n_raw)));
        for (const auto& [k, v] : cfg.entries()) {
            if (k.rfind("col.", 0) == 0) a.columns[k.substr(4)] = v;
        }
        return a;
    }

    bool complex_cir() const { return !cir_real_prefix.empty(); }
};

namespace detail {

inline IngestResult ingest_csv(std::istream& in, const std::string& file, const std::string& file_env,
                               const AdapterConfig& a, std::map<std::tuple<std::string, int, int>, int>& rep_counter) {
    IngestResult res;
    std::string line;
    if (!std::getline(in, line)) return res;
    const auto header = split_string(line, a.delimiter);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index[header[i]] = i;

    const auto column = [&](const std::string& field, bool required) -> std::optional<std::size_t> {
        const auto it = a.columns.find(field);
        if (it == a.columns.end()) {
            if (required) throw Error(ErrorCode::SchemaMismatch, "adapter has no mapping for '" + field + "'");
            return std::nullopt;
        }
        const auto c = index.find(it->second);
        if (c == index.end()) {
            throw Error(ErrorCode::SchemaMismatch,
                        file + ": column '" + it->second + "' (for " + field + ") not in header");
        }
        return c->second;
    };
    const auto anchor_id = column("anchor_id", true);
    const auto tag_id = column("tag_id", true);
    const auto rep_id = column("rep_id", false);
    const auto ax = column("anchor_x", true), ay = column("anchor_y", true);
    const auto tx = column("tag_x", true), ty = column("tag_y", true);
    const auto toa = column("toa_dwm", true);
    const auto fp_idx = column("first_path_idx", false);
    const auto err = column("range_err_cm", false);
    const auto range = column("range_cm", false);
    const auto env_col = column("env", false);

    std::vector<std::size_t> cir_re, cir_im;
    const std::string re_prefix = a.complex_cir() ? a.cir_real_prefix : a.cir_prefix;
    for (std::size_t i = 0; i < a.n_raw; ++i) {
        const auto re = index.find(re_prefix + std::to_string(i));
        if (re == index.end()) {
            throw Error(ErrorCode::SchemaMismatch, file + ": CIR column '" + re_prefix + std::to_string(i) + "' missing");
        }
        cir_re.push_back(re->second);
        if (a.complex_cir()) {
            const auto im = index.find(a.cir_imag_prefix + std::to_string(i));
            if (im == index.end()) {
                throw Error(ErrorCode::SchemaMismatch,
                            file + ": CIR column '" + a.cir_imag_prefix + std::to_string(i) + "' missing");
            }
            cir_im.push_back(im->second);
        }
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split_string(line, a.delimiter);
        if (f.size() != header.size()) {
            res.skipped.push_back({file, lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                                     std::to_string(f.size())});
            continue;
        }
        try {
            CirRecord r;
            r.env_id = a.env ? *a.env : (env_col ? f[*env_col] : file_env);
            r.anchor_id = static_cast<int>(parse_int(f[*anchor_id], "anchor_id"));
            r.tag_id = static_cast<int>(parse_int(f[*tag_id], "tag_id"));
            r.anchor_pos = {a.position_scale * parse_double(f[*ax], "anchor_x"),
                            a.position_scale * parse_double(f[*ay], "anchor_y")};
            r.tag_pos = {a.position_scale * parse_double(f[*tx], "tag_x"),
                         a.position_scale * parse_double(f[*ty], "tag_y")};
            r.toa_dwm = a.toa_scale * parse_double(f[*toa], "toa_dwm");
            r.first_path_idx = fp_idx ? static_cast<int>(parse_int(f[*fp_idx], "first_path_idx"))
                                      : static_cast<int>(std::floor(r.toa_dwm));
            if (err) {
                r.range_err_cm = parse_double(f[*err], "range_err_cm");
            } else if (range) {
                r.range_err_cm = parse_double(f[*range], "range_cm") - distance(r.anchor_pos, r.tag_pos);
            }
            r.samples.resize(a.n_raw);
            for (std::size_t i = 0; i < a.n_raw; ++i) {
                const double re = parse_double(f[cir_re[i]], "cir");
                r.samples[i] = a.complex_cir() ? std::hypot(re, parse_double(f[cir_im[i]], "cir")) : std::abs(re);
            }
            r.validate();
            if (rep_id) {
                r.rep_id = static_cast<int>(parse_int(f[*rep_id], "rep_id"));
            } else {
                r.rep_id = rep_counter[{r.env_id, r.anchor_id, r.tag_id}]++;
            }
            ++res.counts_per_env[r.env_id];
            res.records.push_back(std::move(r));
        } catch (const Error& e) {
            res.skipped.push_back({file, lineno, e.what()});
        }
    }
    return res;
}

}  // namespace detail

// Maps every matching file in `dir` (sorted by name) to canonical records.
// Rows that fail to parse are skipped and listed; a header that does not
// match the adapter raises SchemaMismatch.
inline IngestResult ingest_public_dataset(const std::string& dir, const AdapterConfig& adapter) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingArtifacts, "dataset directory " + dir + " not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == adapter.extension) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    IngestResult all;
    std::map<std::tuple<std::string, int, int>, int> rep_counter;
    for (const auto& p : files) {
        std::ifstream in(p);
        if (!in) {
            all.skipped.push_back({p.string(), 0, "cannot open file"});
            continue;
        }
        auto part = detail::ingest_csv(in, p.string(), p.stem().string(), adapter, rep_counter);
        for (auto& r : part.records) all.records.push_back(std::move(r));
        all.skipped.insert(all.skipped.end(), part.skipped.begin(), part.skipped.end());
        for (const auto& [env, n] : part.counts_per_env) all.counts_per_env[env] += n;
    }
    sort_canonical(all.records);
    return all;
}

struct ToaDataset {
    std::vector<CirWindow> windows;
    std::vector<double> labels;              // window-relative
    std::vector<std::size_t> record_index;   // into the source records
    std::size_t missing_label = 0;
    std::size_t all_zero = 0;
};

// Preprocessed windows with window-relative ToA labels. Unlabeled and
// all-zero records are excluded and counted.
inline ToaDataset make_toa_dataset(const std::vector<CirRecord>& records, const PhysConstants& k = {}) {
    ToaDataset ds;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.range_err_cm) {
            ++ds.missing_label;
            continue;
        }
        try {
            CirWindow w = preprocess(r);
            ds.labels.push_back(toa_label(r, k) - w.origin());
            ds.windows.push_back(w);
            ds.record_index.push_back(i);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AllZeroCir) throw;
            ++ds.all_zero;
        }
    }
    return ds;
}

struct FpDataset {
    std::vector<FingerprintSet> sets;
    // Per set, the source record index per channel (SIZE_MAX for zero-filled).
    std::vector<std::vector<std::size_t>> record_index;
    std::size_t incomplete = 0;
};

inline constexpr std::size_t kMissingRecord = static_cast<std::size_t>(-1);

// One fingerprint set per (env, tag, rep) with anchors in ascending id order
// (the environment's full anchor list); absent anchors get a zero channel.
inline FpDataset make_fp_dataset(const std::vector<CirRecord>& records) {
    std::map<std::string, std::set<int>> anchors_per_env;
    std::map<std::tuple<std::string, int, int>, std::map<int, std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        anchors_per_env[r.env_id].insert(r.anchor_id);
        groups[{r.env_id, r.tag_id, r.rep_id}][r.anchor_id] = i;
    }
    FpDataset ds;
    for (const auto& [key, members] : groups) {
        const auto& [env, tag, rep] = key;
        FingerprintSet fp;
        fp.env_id = env;
        fp.tag_id = tag;
        fp.rep_id = rep;
        fp.tag_pos = records[members.begin()->second].tag_pos;
        std::vector<std::size_t> idx;
        for (int a : anchors_per_env[env]) {
            fp.anchor_ids.push_back(a);
            const auto it = members.find(a);
            CirWindow w;
            if (it == members.end()) {
                fp.complete = false;
                idx.push_back(kMissingRecord);
            } else {
                try {
                    w = preprocess(records[it->second]);
                    idx.push_back(it->second);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::AllZeroCir) throw;
                    w = CirWindow{};
                    fp.complete = false;
                    idx.push_back(kMissingRecord);
                }
            }
            fp.windows.push_back(w);
        }
        if (!fp.complete) ++ds.incomplete;
        ds.sets.push_back(std::move(fp));
        ds.record_index.push_back(std::move(idx));
    }
    return ds;
}

struct SplitPlan {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
    int n_repetitions = 10;
    std::uint64_t base_seed = 1;
    std::vector<std::uint64_t> seeds;  // per repetition; derived from base_seed when absent

    void validate() const {
        require(train > 0 && val > 0 && test >= 0, ErrorCode::InvalidArgument, "split fractions must be positive");
        require(std::abs(train + val + test - 1.0) < 1e-9, ErrorCode::InvalidArgument, "split fractions must sum to 1");
        require(n_repetitions >= 1, ErrorCode::InvalidArgument, "n_repetitions must be >= 1");
    }

    std::uint64_t seed_for(int rep) const {
        if (rep >= 0 && static_cast<std::size_t>(rep) < seeds.size()) return seeds[static_cast<std::size_t>(rep)];
        return derive_seed(base_seed, 0x73706c6974ULL, static_cast<std::uint64_t>(rep));
    }
};

struct Split {
    std::vector<std::size_t> train, val, test;
};

namespace detail {

inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitPlan& plan) {
    const auto round = [](double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); };
    std::size_t n_train = std::min(n, round(plan.train * static_cast<double>(n)));
    std::size_t n_val = std::min(n - n_train, round(plan.val * static_cast<double>(n)));
    return {n_train, n_val, n - n_train - n_val};
}

}  // namespace detail

// Random disjoint partition of [0, n) with sizes rounded from the quotas.
inline Split split(std::size_t n, const SplitPlan& plan, int rep) {
    plan.validate();
    require(n > 0, ErrorCode::EmptyDataset, "cannot split an empty dataset");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(plan.seed_for(rep));
    rng.shuffle(perm);
    const auto [n_train, n_val, n_test] = detail::split_sizes(n, plan);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

// Group-disjoint variant: whole groups (e.g. tag locations) are assigned to
// one partition; quotas apply to the number of groups.
inline Split split_by_group(std::span<const int> group_of, const SplitPlan& plan, int rep) {
    require(!group_of.empty(), ErrorCode::EmptyDataset, "cannot split an empty dataset");
    std::vector<int> groups(group_of.begin(), group_of.end());
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    const Split gs = split(groups.size(), plan, rep);
    std::map<int, int> part;
    for (auto i : gs.train) part[groups[i]] = 0;
    for (auto i : gs.val) part[groups[i]] = 1;
    for (auto i : gs.test) part[groups[i]] = 2;
    Split s;
    for (std::size_t i = 0; i < group_of.size(); ++i) {
        const int p = part.at(group_of[i]);
        (p == 0 ? s.train : p == 1 ? s.val : s.test).push_back(i);
    }
    return s;
}

inline nlohmann::json split_to_json(const Split& s, int rep, std::uint64_t seed) {
    return {{"rep", rep}, {"seed", seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

inline Split split_from_json(const nlohmann::json& j) {
    try {
        return {j.at("train").get<std::vector<std::size_t>>(), j.at("val").get<std::vector<std::size_t>>(),
                j.at("test").get<std::vector<std::size_t>>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("split manifest: ") + e.what());
    }
}

}  // namespace uwbpos

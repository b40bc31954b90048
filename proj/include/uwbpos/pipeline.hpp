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

// End-to-end evaluation harness: split a labeled corpus, tune the
// conventional detectors, train the two networks, and compute ranging and
// positioning errors per method. The in-memory stages are used directly by
// tests; the `run_*` wrappers add the on-disk layout used by the CLI:
//
//   <out_dir>/corpus_<env>.csv
//   <out_dir>/<env>/rep<r>/{split.json, tuned_params.json, ann_toa.json, ann_fp.json,
//                           history_<model>.tsv, ranging_*.tsv, positioning_*.tsv, algos_*.tsv}
//   <out_dir>/report/{table_ranging.tsv, table_positioning.tsv, table_algos.tsv, cdf_*.tsv}

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "uwbpos/chan_sim.hpp"
#include "uwbpos/core.hpp"
#include "uwbpos/dataio.hpp"
#include "uwbpos/error.hpp"
#include "uwbpos/eval.hpp"
#include "uwbpos/kv_config.hpp"
#include "uwbpos/locate.hpp"
#include "uwbpos/models.hpp"
#include "uwbpos/net/checkpoint.hpp"
#include "uwbpos/toa_conv.hpp"

namespace uwbpos {

enum class SplitMode { Set, Location };

struct RunConfig {
    std::string env = "apartment";
    std::string out_dir = "out";
    std::string corpus;  // defaults to <out_dir>/corpus_<env>.csv
    std::uint64_t seed = 1;
    SplitPlan plan;
    SplitMode split_mode = SplitMode::Set;
    net::TrainConfig train;
    SolverConfig solver;
    PhysConstants phys;
    TuneGrid peak_grid = TuneGrid::default_peak();
    TuneGrid lde_grid = TuneGrid::default_lde();

    std::string corpus_path() const {
        return corpus.empty() ? (std::filesystem::path(out_dir) / ("corpus_" + env + ".csv")).string() : corpus;
    }
    std::string rep_dir(int rep) const {
        return (std::filesystem::path(out_dir) / env / ("rep" + std::to_string(rep))).string();
    }
    std::uint64_t train_seed(int rep) const { return derive_seed(seed, 0x6e6e, static_cast<std::uint64_t>(rep)); }

    static RunConfig from_config(const KeyValueConfig& c) {
        RunConfig r;
        r.env = c.get("env", r.env);
        r.out_dir = c.get("out_dir", r.out_dir);
        r.corpus = c.get("corpus", r.corpus);
        r.seed = static_cast<std::uint64_t>(c.get("seed", static_cast<long long>(r.seed)));
        r.plan.train = c.get("train_fraction", r.plan.train);
        r.plan.val = c.get("val_fraction", r.plan.val);
        r.plan.test = c.get("test_fraction", r.plan.test);
        r.plan.n_repetitions = c.get("split_reps", r.plan.n_repetitions);
        const auto mode = c.get("split_mode", std::string("set"));
        require(mode == "set" || mode == "location", ErrorCode::InvalidArgument, "split_mode must be set|location");
        r.split_mode = mode == "set" ? SplitMode::Set : SplitMode::Location;
        r.train.batch_size = static_cast<std::size_t>(c.get("batch_size", static_cast<long long>(r.train.batch_size)));
        r.train.lr0 = c.get("lr0", r.train.lr0);
        r.train.max_epochs = c.get("max_epochs", r.train.max_epochs);
        r.train.patience_early = c.get("patience_early", r.train.patience_early);
        r.train.plateau_patience = c.get("plateau_patience", r.train.plateau_patience);
        r.train.plateau_factor = c.get("plateau_factor", r.train.plateau_factor);
        r.train.min_lr = c.get("min_lr", r.train.min_lr);
        r.solver.max_iters = c.get("max_iters", r.solver.max_iters);
        r.solver.tol_cm = c.get("tol_cm", r.solver.tol_cm);
        r.solver.damping = c.get("damping", r.solver.damping);
        r.phys.dt_ns = c.get("dt_ns", r.phys.dt_ns);
        const auto doubles = [&](const std::string& key, std::vector<double>& dst) {
            if (auto v = c.find(key)) {
                dst.clear();
                for (const auto& s : split_string(*v, ',')) dst.push_back(parse_double(s, key));
            }
        };
        const auto ints = [&](const std::string& key, std::vector<int>& dst) {
            if (auto v = c.find(key)) {
                dst.clear();
                for (const auto& s : split_string(*v, ',')) dst.push_back(static_cast<int>(parse_int(s, key)));
            }
        };
        doubles("peak_beta", r.peak_grid.beta);
        doubles("lde_beta", r.lde_grid.beta);
        doubles("lde_factor", r.lde_grid.lede_factor);
        ints("lde_w_avg", r.lde_grid.w_avg);
        ints("lde_w_small", r.lde_grid.w_small);
        ints("lde_w_large", r.lde_grid.w_large);
        r.plan.base_seed = r.seed;
        r.plan.validate();
        r.train.validate();
        r.solver.validate();
        r.phys.validate();
        return r;
    }
};

// Labeled corpus of one environment with a fingerprint-set level split;
// every ToA item inherits the partition of the set its record belongs to,
// so positioning test points are unseen by every estimator.
struct Experiment {
    std::vector<CirRecord> records;
    ToaDataset toa;
    FpDataset fp;
    Split set_split;
    Split toa_split;
    int rep = 0;
    std::uint64_t split_seed = 0;
};

inline Experiment make_experiment(std::vector<CirRecord> records, const SplitPlan& plan, int rep,
                                  SplitMode mode = SplitMode::Set, const PhysConstants& k = {}) {
    require(!records.empty(), ErrorCode::EmptyDataset, "corpus is empty");
    Experiment ex;
    ex.records = std::move(records);
    ex.rep = rep;
    ex.split_seed = plan.seed_for(rep);
    ex.toa = make_toa_dataset(ex.records, k);
    ex.fp = make_fp_dataset(ex.records);
    require(!ex.toa.windows.empty(), ErrorCode::EmptyDataset, "corpus has no labeled records");

    if (mode == SplitMode::Set) {
        ex.set_split = split(ex.fp.sets.size(), plan, rep);
    } else {
        std::vector<int> tag_of;
        for (const auto& s : ex.fp.sets) tag_of.push_back(s.tag_id);
        ex.set_split = split_by_group(tag_of, plan, rep);
    }
    std::map<std::tuple<std::string, int, int>, int> part_of_set;
    const auto mark = [&](const std::vector<std::size_t>& idx, int part) {
        for (auto i : idx) {
            const auto& s = ex.fp.sets[i];
            part_of_set[{s.env_id, s.tag_id, s.rep_id}] = part;
        }
    };
    mark(ex.set_split.train, 0);
    mark(ex.set_split.val, 1);
    mark(ex.set_split.test, 2);
    for (std::size_t i = 0; i < ex.toa.windows.size(); ++i) {
        const auto& r = ex.records[ex.toa.record_index[i]];
        const int part = part_of_set.at({r.env_id, r.tag_id, r.rep_id});
        (part == 0 ? ex.toa_split.train : part == 1 ? ex.toa_split.val : ex.toa_split.test).push_back(i);
    }
    return ex;
}

struct TunedParams {
    PeakParams peak;
    LdeParams lde;
    double peak_mae = 0.0;
    double lde_mae = 0.0;
};

inline nlohmann::json tuned_to_json(const TunedParams& t) {
    return {{"peak", {{"beta", t.peak.beta}, {"mae_samples", t.peak_mae}}},
            {"lde",
             {{"beta", t.lde.beta},
              {"lede_factor", t.lde.lede_factor},
              {"w_avg", t.lde.w_avg},
              {"w_small", t.lde.w_small},
              {"w_large", t.lde.w_large},
              {"mae_samples", t.lde_mae}}}};
}

inline TunedParams tuned_from_json(const nlohmann::json& j) {
    try {
        TunedParams t;
        t.peak.beta = j.at("peak").at("beta").get<double>();
        t.peak_mae = j.at("peak").at("mae_samples").get<double>();
        const auto& l = j.at("lde");
        t.lde = {l.at("beta").get<double>(), l.at("lede_factor").get<double>(), l.at("w_avg").get<int>(),
                 l.at("w_small").get<int>(), l.at("w_large").get<int>()};
        t.lde_mae = l.at("mae_samples").get<double>();
        t.peak.validate();
        t.lde.validate();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("tuned parameters: ") + e.what());
    }
}

// Conventional detectors are tuned on the union of training and validation items.
inline TunedParams tune_conventional(const Experiment& ex, const TuneGrid& peak_grid, const TuneGrid& lde_grid) {
    std::vector<std::size_t> idx = ex.toa_split.train;
    idx.insert(idx.end(), ex.toa_split.val.begin(), ex.toa_split.val.end());
    require(!idx.empty(), ErrorCode::EmptyDataset, "no tuning items");
    std::vector<CirWindow> w;
    std::vector<double> l;
    for (auto i : idx) {
        w.push_back(ex.toa.windows[i]);
        l.push_back(ex.toa.labels[i]);
    }
    TunedParams t;
    const auto p = tune(EstimatorKind::Peak, peak_grid, w, l);
    const auto d = tune(EstimatorKind::Lde, lde_grid, w, l);
    t.peak = p.peak;
    t.peak_mae = p.mae;
    t.lde = d.lde;
    t.lde_mae = d.mae;
    return t;
}

inline FitResult train_toa_model(const Experiment& ex, const net::TrainConfig& cfg) {
    return train_ann_toa(ex.toa.windows, ex.toa.labels, ex.toa_split.train, ex.toa_split.val, cfg);
}

inline FitResult train_fp_model(const Experiment& ex, const net::TrainConfig& cfg) {
    return train_ann_fp(ex.fp.sets, ex.set_split.train, ex.set_split.val, cfg);
}

inline const std::vector<std::string>& toa_methods() {
    static const std::vector<std::string> m{"Peak", "LDE", "ANN_ToA"};
    return m;
}

// Window-relative ToA of one window by a named method.
inline double estimate_window(const std::string& method, const CirWindow& w, const TunedParams& tuned,
                              const AnnModel* toa_model) {
    if (method == "Peak") return peak_toa_or_fallback(w, tuned.peak);
    if (method == "LDE") return lde_toa_or_fallback(w, tuned.lde);
    if (method == "ANN_ToA") {
        if (!toa_model) throw Error(ErrorCode::MissingArtifacts, "ANN_ToA model not available");
        return estimate_toa(*toa_model, w);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown ToA method '" + method + "'");
}

// |estimated - true| range in cm for every test record, per ToA method.
inline std::map<std::string, std::vector<double>> ranging_errors(const Experiment& ex, const TunedParams& tuned,
                                                                 const AnnModel* toa_model,
                                                                 const PhysConstants& k = {}) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& m : toa_methods()) {
        if (m == "ANN_ToA" && !toa_model) continue;
        auto& errs = out[m];
        for (auto i : ex.toa_split.test) {
            const double est = estimate_window(m, ex.toa.windows[i], tuned, toa_model);
            errs.push_back(std::abs(est - ex.toa.labels[i]) * k.cm_per_sample());
        }
    }
    return out;
}

// Device range with the device ToA replaced by `toa_abs`: the range shift
// equals the ToA shift times the sample length.
inline double corrected_range_cm(const CirRecord& r, double toa_abs, const PhysConstants& k = {}) {
    require(r.range_err_cm.has_value(), ErrorCode::MissingLabel, "record has no device range");
    const double device_range = distance(r.anchor_pos, r.tag_pos) + *r.range_err_cm;
    return device_range + (toa_abs - r.toa_dwm) * k.cm_per_sample();
}

struct PositioningOptions {
    SolverConfig solver;
    PhysConstants phys;
    bool algo_variants = true;  // also emit Algo1 / Algo2@closest / Algo2@Algo1 per ToA method
};

inline std::string algo_key(const std::string& variant, const std::string& method) {
    return variant + "[" + method + "]";
}

// Positioning error (cm) of every test fingerprint set, per method.
inline std::map<std::string, std::vector<double>> positioning_errors(const Experiment& ex, const TunedParams& tuned,
                                                                     const AnnModel* toa_model,
                                                                     const AnnModel* fp_model,
                                                                     const PositioningOptions& opt = {}) {
    std::map<std::string, std::vector<double>> out;
    std::map<std::size_t, std::size_t> toa_item_of_record;
    for (std::size_t i = 0; i < ex.toa.record_index.size(); ++i) toa_item_of_record[ex.toa.record_index[i]] = i;

    for (auto s : ex.set_split.test) {
        const auto& fp = ex.fp.sets[s];
        for (const auto& m : toa_methods()) {
            if (m == "ANN_ToA" && !toa_model) continue;
            std::vector<RangeObservation> obs;
            for (auto rec : ex.fp.record_index[s]) {
                if (rec == kMissingRecord) continue;
                const auto it = toa_item_of_record.find(rec);
                if (it == toa_item_of_record.end()) continue;
                const auto& w = ex.toa.windows[it->second];
                const double toa_abs = estimate_window(m, w, tuned, toa_model) + w.origin();
                obs.push_back({ex.records[rec].anchor_pos,
                               std::max(0.0, corrected_range_cm(ex.records[rec], toa_abs, opt.phys))});
            }
            if (obs.size() < 3) continue;
            const auto fix = locate_ranges(obs, InitMode::Algo1, opt.solver);
            out[m + "+Algo"].push_back(positioning_error(fix.position, fp.tag_pos));
            if (opt.algo_variants) {
                Position2D a1;
                try {
                    a1 = algo1_lls(obs);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::DegenerateGeometry) throw;
                    a1 = anchor_centroid(obs);
                }
                out[algo_key("Algo1", m)].push_back(positioning_error(a1, fp.tag_pos));
                out[algo_key("Algo2@Algo1", m)].push_back(positioning_error(fix.position, fp.tag_pos));
                const auto closest = locate_ranges(obs, InitMode::ClosestAnchor, opt.solver);
                out[algo_key("Algo2@closest", m)].push_back(positioning_error(closest.position, fp.tag_pos));
            }
        }
        if (fp_model) out["ANN_FP"].push_back(positioning_error(estimate_position_fp(*fp_model, fp), fp.tag_pos));
    }
    return out;
}

// File-system friendly report name.
inline std::string report_stem(const std::string& method) {
    std::string s;
    for (char c : method) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
    while (!s.empty() && s.back() == '_') s.pop_back();
    return s;
}

namespace detail {

inline std::vector<CirRecord> load_env_corpus(const RunConfig& cfg) {
    auto res = read_canonical_file(cfg.corpus_path());
    std::vector<CirRecord> env_records;
    for (auto& r : res.records) {
        if (r.env_id == cfg.env) env_records.push_back(std::move(r));
    }
    if (env_records.empty()) {
        throw Error(ErrorCode::EmptyDataset, "corpus " + cfg.corpus_path() + " has no records for env '" + cfg.env + "'");
    }
    return env_records;
}

inline void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

inline std::string rep_file(const RunConfig& cfg, int rep, const std::string& name) {
    return (std::filesystem::path(cfg.rep_dir(rep)) / name).string();
}

inline void write_history(const std::string& path, const net::TrainHistory& h) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "# best_epoch\t" << h.best_epoch << "\n# early_stopped\t" << (h.early_stopped ? 1 : 0) << '\n'
        << "epoch\ttrain_loss\tval_loss\tlr\n";
    for (std::size_t e = 0; e < h.val_loss.size(); ++e) {
        out << e + 1 << '\t' << format_double(h.train_loss[e]) << '\t' << format_double(h.val_loss[e]) << '\t'
            << format_double(h.lr[e]) << '\n';
    }
}

inline void write_reports(const RunConfig& cfg, int rep, std::uint64_t seed, const std::string& prefix,
                          const std::map<std::string, std::vector<double>>& errors,
                          std::vector<EvalReport>& reports) {
    for (const auto& [method, errs] : errors) {
        if (errs.empty()) continue;
        const bool is_algo = method.find('[') != std::string::npos;
        const std::string pre = is_algo ? "algos_" : prefix;
        auto r = make_report(method, cfg.env, rep, seed, errs);
        write_report(rep_file(cfg, rep, pre + report_stem(method) + ".tsv"), r);
        reports.push_back(std::move(r));
    }
}

}  // namespace detail

inline Experiment load_experiment(const RunConfig& cfg, int rep) {
    return make_experiment(detail::load_env_corpus(cfg), cfg.plan, rep, cfg.split_mode, cfg.phys);
}

inline TunedParams run_tune(const RunConfig& cfg, int rep) {
    const auto ex = load_experiment(cfg, rep);
    detail::ensure_dir(cfg.rep_dir(rep));
    net::write_json_file(detail::rep_file(cfg, rep, "split.json"), split_to_json(ex.set_split, rep, ex.split_seed));
    const auto t = tune_conventional(ex, cfg.peak_grid, cfg.lde_grid);
    net::write_json_file(detail::rep_file(cfg, rep, "tuned_params.json"), tuned_to_json(t));
    return t;
}

inline net::TrainHistory run_train(const RunConfig& cfg, int rep, ModelKind kind) {
    const auto ex = load_experiment(cfg, rep);
    detail::ensure_dir(cfg.rep_dir(rep));
    auto tc = cfg.train;
    tc.seed = cfg.train_seed(rep);
    auto fit = kind == ModelKind::AnnToa ? train_toa_model(ex, tc) : train_fp_model(ex, tc);
    save_model(detail::rep_file(cfg, rep, to_string(kind) + ".json"), fit.model);
    detail::write_history(detail::rep_file(cfg, rep, "history_" + to_string(kind) + ".tsv"), fit.history);
    return fit.history;
}

namespace detail {

inline TunedParams load_tuned(const RunConfig& cfg, int rep) {
    const auto path = rep_file(cfg, rep, "tuned_params.json");
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::MissingArtifacts, "tuned parameters missing: " + path + " (run `tune` first)");
    }
    return tuned_from_json(net::read_json_file(path));
}

inline AnnModel load_required_model(const RunConfig& cfg, int rep, ModelKind kind) {
    const auto path = rep_file(cfg, rep, to_string(kind) + ".json");
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::MissingArtifacts,
                    to_string(kind) + " model missing: " + path + " (run `train " +
                        (kind == ModelKind::AnnToa ? "ann-toa" : "ann-fp") + "` first)");
    }
    return load_model(path);
}

}  // namespace detail

inline std::vector<EvalReport> run_ranging_eval(const RunConfig& cfg, int rep) {
    const auto tuned = detail::load_tuned(cfg, rep);
    const auto toa_model = detail::load_required_model(cfg, rep, ModelKind::AnnToa);
    const auto ex = load_experiment(cfg, rep);
    std::vector<EvalReport> reports;
    detail::write_reports(cfg, rep, ex.split_seed, "ranging_", ranging_errors(ex, tuned, &toa_model, cfg.phys),
                          reports);
    return reports;
}

inline std::vector<EvalReport> run_positioning_eval(const RunConfig& cfg, int rep) {
    const auto tuned = detail::load_tuned(cfg, rep);
    const auto toa_model = detail::load_required_model(cfg, rep, ModelKind::AnnToa);
    const auto fp_model = detail::load_required_model(cfg, rep, ModelKind::AnnFp);
    const auto ex = load_experiment(cfg, rep);
    PositioningOptions opt{cfg.solver, cfg.phys, true};
    std::vector<EvalReport> reports;
    detail::write_reports(cfg, rep, ex.split_seed, "positioning_",
                          positioning_errors(ex, tuned, &toa_model, &fp_model, opt), reports);
    return reports;
}

struct MergedMethod {
    std::string method;
    std::vector<double> p90_per_rep;
    std::vector<double> pooled;
    double mean_p90() const {
        double s = 0;
        for (double v : p90_per_rep) s += v;
        return p90_per_rep.empty() ? 0.0 : s / static_cast<double>(p90_per_rep.size());
    }
};

// Merges per-rep report files under <out_dir>/<env>/rep*/ into tables and
// pooled CDFs under <out_dir>/report/. Returns the tables keyed by kind.
inline std::map<std::string, std::map<std::string, std::map<std::string, MergedMethod>>> run_report(
    const std::string& out_dir) {
    namespace fs = std::filesystem;
    // kind -> env -> method -> merged
    std::map<std::string, std::map<std::string, std::map<std::string, MergedMethod>>> merged;
    if (!fs::is_directory(out_dir)) throw Error(ErrorCode::MissingArtifacts, "no output directory " + out_dir);

    std::vector<fs::path> envs;
    for (const auto& e : fs::directory_iterator(out_dir)) {
        if (e.is_directory() && e.path().filename() != "report") envs.push_back(e.path());
    }
    std::sort(envs.begin(), envs.end());
    for (const auto& env_dir : envs) {
        std::vector<std::pair<int, fs::path>> reps;
        for (const auto& e : fs::directory_iterator(env_dir)) {
            const auto name = e.path().filename().string();
            if (e.is_directory() && name.rfind("rep", 0) == 0) {
                reps.emplace_back(static_cast<int>(parse_int(name.substr(3), "rep directory")), e.path());
            }
        }
        std::sort(reps.begin(), reps.end());
        for (const auto& [rep, dir] : reps) {
            std::vector<fs::path> files;
            for (const auto& f : fs::directory_iterator(dir)) files.push_back(f.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const auto name = f.filename().string();
                std::string kind;
                for (const char* k : {"ranging_", "positioning_", "algos_"}) {
                    if (name.rfind(k, 0) == 0 && f.extension() == ".tsv") kind = std::string(k, std::strlen(k) - 1);
                }
                if (kind.empty()) continue;
                const auto r = read_report(f.string());
                auto& m = merged[kind][env_dir.filename().string()][r.method];
                m.method = r.method;
                m.p90_per_rep.push_back(r.p90);
                m.pooled.insert(m.pooled.end(), r.errors.begin(), r.errors.end());
            }
        }
    }
    if (merged.empty()) throw Error(ErrorCode::MissingArtifacts, "no evaluation reports found under " + out_dir);

    const auto report_dir = fs::path(out_dir) / "report";
    fs::create_directories(report_dir);
    for (const auto& [kind, by_env] : merged) {
        std::vector<std::string> methods;
        for (const auto& [env, by_method] : by_env)
            for (const auto& [method, _] : by_method)
                if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
        std::sort(methods.begin(), methods.end());

        std::ofstream table(report_dir / ("table_" + kind + ".tsv"));
        table << "# 90th percentile error (cm), averaged over repetitions; percentile: " << kPercentileConvention
              << '\n';
        table << "method";
        for (const auto& [env, _] : by_env) table << '\t' << env;
        table << '\n';
        for (const auto& method : methods) {
            table << method;
            for (const auto& [env, by_method] : by_env) {
                const auto it = by_method.find(method);
                table << '\t' << (it == by_method.end() ? std::string("-") : fixed(it->second.mean_p90(), 1));
            }
            table << '\n';
        }
        for (const auto& [env, by_method] : by_env) {
            for (const auto& [method, m] : by_method) {
                write_cdf((report_dir / ("cdf_" + kind + "_" + env + "_" + report_stem(method) + ".tsv")).string(),
                          empirical_cdf(m.pooled));
            }
        }
    }
    return merged;
}

}  // namespace uwbpos

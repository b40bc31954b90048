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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uwbpos/chan_sim.hpp"
#include "uwbpos/dataio.hpp"
#include "uwbpos/error.hpp"
#include "uwbpos/kv_config.hpp"
#include "uwbpos/pipeline.hpp"

namespace {

using namespace uwbpos;

struct CommonFlags {
    std::string config;
    std::optional<long long> seed;
    std::optional<std::string> env;
    std::optional<std::string> out_dir;
    std::optional<int> rep;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "key = value configuration file");
    sub->add_option("--seed", f.seed, "base seed (overrides config)");
    sub->add_option("--env", f.env, "environment id (overrides config)");
    sub->add_option("--out-dir", f.out_dir, "output directory (overrides config)");
    sub->add_option("--rep", f.rep, "single repetition index; all repetitions when omitted");
}

KeyValueConfig load_config(const CommonFlags& f) {
    KeyValueConfig c;
    if (!f.config.empty()) c = KeyValueConfig::load(f.config);
    if (f.seed) c.set("seed", std::to_string(*f.seed));
    if (f.env) c.set("env", *f.env);
    if (f.out_dir) c.set("out_dir", *f.out_dir);
    return c;
}

std::vector<int> reps_of(const CommonFlags& f, const RunConfig& rc) {
    if (f.rep) {
        require(*f.rep >= 0, ErrorCode::InvalidArgument, "--rep must be >= 0");
        return {*f.rep};
    }
    std::vector<int> r;
    for (int i = 0; i < rc.plan.n_repetitions; ++i) r.push_back(i);
    return r;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_simulate(const CommonFlags& f) {
    auto c = load_config(f);
    if (!c.has("preset") && !c.has("anchors")) c.set("preset", c.get("env", std::string("apartment")));
    if (c.has("env")) c.set("env_id", c.require_string("env"));
    const auto sc = scenario_from_config(c);
    const auto out_dir = c.get("out_dir", std::string("out"));
    std::filesystem::create_directories(out_dir);
    const auto corpus = generate_corpus(sc);
    std::vector<CirRecord> records;
    std::size_t nlos = 0;
    for (const auto& r : corpus.records) {
        records.push_back(r.record);
        nlos += r.is_nlos ? 1 : 0;
    }
    const auto path = (std::filesystem::path(out_dir) / ("corpus_" + sc.env_id + ".csv")).string();
    write_canonical_file(path, records);
    print_json({{"corpus", path}, {"env", sc.env_id}, {"records", records.size()}, {"nlos_links", nlos},
                {"seed", sc.seed}});
    return 0;
}

int cmd_ingest(const CommonFlags& f, const std::string& input) {
    const auto c = load_config(f);
    const auto adapter = AdapterConfig::from_config(c);
    const auto out_dir = c.get("out_dir", std::string("out"));
    std::filesystem::create_directories(out_dir);
    auto res = ingest_public_dataset(input, adapter);
    std::map<std::string, std::vector<CirRecord>> by_env;
    for (auto& r : res.records) by_env[r.env_id].push_back(std::move(r));
    nlohmann::json summary;
    for (const auto& [env, recs] : by_env) {
        const auto path = (std::filesystem::path(out_dir) / ("corpus_" + env + ".csv")).string();
        write_canonical_file(path, recs);
        const auto fp = make_fp_dataset(recs);
        summary["environments"][env] = {{"corpus", path},
                                        {"records", recs.size()},
                                        {"fingerprint_sets", fp.sets.size()},
                                        {"incomplete_sets", fp.incomplete}};
    }
    summary["skipped"] = nlohmann::json::array();
    for (const auto& s : res.skipped) summary["skipped"].push_back({{"file", s.file}, {"line", s.line}, {"reason", s.reason}});
    summary["partial"] = res.partial();
    net::write_json_file((std::filesystem::path(out_dir) / "ingest_summary.json").string(), summary);
    print_json(summary);
    return 0;
}

int cmd_tune(const CommonFlags& f) {
    const auto rc = RunConfig::from_config(load_config(f));
    nlohmann::json out = nlohmann::json::array();
    for (int rep : reps_of(f, rc)) {
        auto j = tuned_to_json(run_tune(rc, rep));
        j["rep"] = rep;
        out.push_back(j);
    }
    print_json(out);
    return 0;
}

int cmd_train(const CommonFlags& f, const std::string& which) {
    const auto rc = RunConfig::from_config(load_config(f));
    const auto kind = which == "ann-toa" ? ModelKind::AnnToa : ModelKind::AnnFp;
    nlohmann::json out = nlohmann::json::array();
    for (int rep : reps_of(f, rc)) {
        const auto h = run_train(rc, rep, kind);
        out.push_back({{"rep", rep},
                       {"model", to_string(kind)},
                       {"epochs", h.val_loss.size()},
                       {"best_epoch", h.best_epoch},
                       {"best_val_loss", h.best_val_loss}});
    }
    print_json(out);
    return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& which) {
    const auto rc = RunConfig::from_config(load_config(f));
    nlohmann::json out = nlohmann::json::array();
    for (int rep : reps_of(f, rc)) {
        const auto reports = which == "ranging" ? run_ranging_eval(rc, rep) : run_positioning_eval(rc, rep);
        for (const auto& r : reports) {
            out.push_back({{"rep", rep}, {"method", r.method}, {"n", r.errors.size()}, {"p90_cm", r.p90}});
        }
    }
    print_json(out);
    return 0;
}

int cmd_report(const CommonFlags& f) {
    const auto c = load_config(f);
    const auto out_dir = c.get("out_dir", std::string("out"));
    const auto merged = run_report(out_dir);
    nlohmann::json out;
    for (const auto& [kind, by_env] : merged)
        for (const auto& [env, by_method] : by_env)
            for (const auto& [method, m] : by_method) out[kind][env][method] = m.mean_p90();
    print_json(out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UWB ranging and positioning pipeline"};
    app.require_subcommand(1);
    CommonFlags flags;
    std::string input, which_train, which_eval;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic corpus from a scenario");
    add_common(sim, flags);
    auto* ing = app.add_subcommand("ingest", "convert a public dataset directory to canonical corpora");
    add_common(ing, flags);
    ing->add_option("--input", input, "dataset directory")->required();
    auto* tun = app.add_subcommand("tune", "grid search for the Peak and LDE detectors");
    add_common(tun, flags);
    auto* trn = app.add_subcommand("train", "train a network model");
    add_common(trn, flags);
    trn->add_option("model", which_train, "ann-toa | ann-fp")->required()->check(CLI::IsMember({"ann-toa", "ann-fp"}));
    auto* evl = app.add_subcommand("eval", "evaluate ranging or positioning");
    add_common(evl, flags);
    evl->add_option("target", which_eval, "ranging | positioning")
        ->required()
        ->check(CLI::IsMember({"ranging", "positioning"}));
    auto* rep = app.add_subcommand("report", "merge repetitions into tables and CDF files");
    add_common(rep, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << nlohmann::json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        if (*sim) return cmd_simulate(flags);
        if (*ing) return cmd_ingest(flags, input);
        if (*tun) return cmd_tune(flags);
        if (*trn) return cmd_train(flags, which_train);
        if (*evl) return cmd_eval(flags, which_eval);
        if (*rep) return cmd_report(flags);
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}

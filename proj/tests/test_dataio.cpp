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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "uwbpos/chan_sim.hpp"
#include "uwbpos/dataio.hpp"

namespace uwbpos {
namespace {

namespace fs = std::filesystem;

CirRecord sample_record(int anchor, int tag, int rep, double toa, std::optional<double> err) {
    CirRecord r;
    r.env_id = "lab";
    r.anchor_id = anchor;
    r.tag_id = tag;
    r.rep_id = rep;
    r.anchor_pos = {100.0 * anchor, 0.1 + anchor};
    r.tag_pos = {250.5 + tag, 1.0 / 3.0};
    r.samples.resize(400);
    for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = std::fabs(std::sin(0.37 * i + anchor)) + 1e-3;
    r.toa_dwm = toa;
    r.first_path_idx = static_cast<int>(std::floor(toa));
    r.range_err_cm = err;
    return r;
}

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("uwbpos_dataio_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TEST(Canonical, RoundTripIsExact) {
    std::vector<CirRecord> recs{sample_record(0, 1, 0, 300.25, 12.5), sample_record(1, 1, 0, 301.0, std::nullopt),
                                sample_record(2, 3, 4, 290.125, -0.1)};
    std::stringstream ss;
    write_canonical(ss, recs);
    const auto back = read_canonical(ss);
    ASSERT_EQ(back.records.size(), recs.size());
    EXPECT_FALSE(back.partial());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& a = recs[i];
        const auto& b = back.records[i];
        EXPECT_EQ(a.env_id, b.env_id);
        EXPECT_EQ(a.anchor_id, b.anchor_id);
        EXPECT_EQ(a.tag_id, b.tag_id);
        EXPECT_EQ(a.rep_id, b.rep_id);
        EXPECT_EQ(a.anchor_pos.x, b.anchor_pos.x);
        EXPECT_EQ(a.anchor_pos.y, b.anchor_pos.y);
        EXPECT_EQ(a.tag_pos.y, b.tag_pos.y);
        EXPECT_EQ(a.first_path_idx, b.first_path_idx);
        EXPECT_EQ(a.toa_dwm, b.toa_dwm);
        EXPECT_EQ(a.range_err_cm, b.range_err_cm);
        EXPECT_EQ(a.samples, b.samples);
    }
    EXPECT_EQ(back.counts_per_env.at("lab"), 3u);
}

TEST(Canonical, TruncatedRowIsSkippedAndReported) {
    std::stringstream ss;
    write_canonical(ss, {sample_record(0, 0, 0, 300, 1.0), sample_record(1, 0, 0, 300, 1.0)});
    std::string text = ss.str();
    text.resize(text.size() - 40);  // cut the last row short
    text += "\n";
    std::istringstream in(text);
    const auto res = read_canonical(in);
    EXPECT_EQ(res.records.size(), 1u);
    ASSERT_EQ(res.skipped.size(), 1u);
    EXPECT_EQ(res.skipped[0].line, 4u);
    EXPECT_TRUE(res.partial());
}

TEST(Canonical, InvalidRowValuesAreSkipped) {
    auto bad = sample_record(0, 0, 0, 300, 1.0);
    std::stringstream ss;
    write_canonical(ss, {bad});
    std::string text = ss.str();
    const auto pos = text.find(",300,");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 5, ",999,");  // first_path_idx beyond the buffer
    std::istringstream in(text);
    const auto res = read_canonical(in);
    EXPECT_TRUE(res.records.empty());
    EXPECT_EQ(res.skipped.size(), 1u);
}

TEST(Canonical, EmptyStreamGivesNoRecords) {
    std::istringstream in("");
    EXPECT_TRUE(read_canonical(in).records.empty());
}

TEST(Canonical, WrongMagicOrVersionIsSchemaMismatch) {
    std::istringstream a("hello,world\n");
    EXPECT_THROW(read_canonical(a), Error);
    std::istringstream b("#uwbpos-cir,version=7,n_raw=3\n");
    try {
        read_canonical(b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
    }
}

TEST(Canonical, MissingFileIsMissingArtifacts) {
    try {
        read_canonical_file("/nonexistent/corpus.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingArtifacts);
    }
}

TEST(Canonical, SortOrderIsEnvTagRepAnchor) {
    std::vector<CirRecord> recs{sample_record(1, 2, 0, 300, 0.0), sample_record(0, 2, 0, 300, 0.0),
                                sample_record(0, 1, 1, 300, 0.0), sample_record(0, 1, 0, 300, 0.0)};
    recs[0].env_id = "a";
    sort_canonical(recs);
    EXPECT_EQ(recs[0].env_id, "a");
    EXPECT_EQ(std::make_tuple(recs[1].tag_id, recs[1].rep_id), std::make_tuple(1, 0));
    EXPECT_EQ(std::make_tuple(recs[2].tag_id, recs[2].rep_id), std::make_tuple(1, 1));
    EXPECT_EQ(recs[3].anchor_id, 0);
}

AdapterConfig toy_adapter(std::size_t n_raw) {
    AdapterConfig a;
    a.n_raw = n_raw;
    a.position_scale = 100.0;
    a.columns = {{"anchor_id", "A"}, {"tag_id", "T"}, {"anchor_x", "AX"}, {"anchor_y", "AY"},
                 {"tag_x", "TX"},    {"tag_y", "TY"}, {"toa_dwm", "FP"},  {"range_cm", "R"}};
    return a;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

TEST(Adapter, MapsColumnsAndDerivesFields) {
    const auto dir = scratch_dir("adapter");
    write_file(dir / "kitchen.csv",
               "A,T,AX,AY,TX,TY,FP,R,CIR0,CIR1,CIR2,CIR3\n"
               "0,5,0,0,3,4,1.5,512.5,1,-2,3,4\n"
               "0,5,0,0,3,4,2.0,499,1,2,3,4\n"
               "1,5,0,0,3,4,2.0\n");
    const auto res = ingest_public_dataset(dir.string(), toy_adapter(4));
    ASSERT_EQ(res.records.size(), 2u);
    ASSERT_EQ(res.skipped.size(), 1u);
    const auto& r = res.records[0];
    EXPECT_EQ(r.env_id, "kitchen");
    EXPECT_DOUBLE_EQ(r.tag_pos.x, 300.0);
    EXPECT_DOUBLE_EQ(r.tag_pos.y, 400.0);
    EXPECT_EQ(r.first_path_idx, 1);
    EXPECT_NEAR(*r.range_err_cm, 12.5, 1e-12);
    EXPECT_EQ(r.samples, (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(res.records[0].rep_id, 0);
    EXPECT_EQ(res.records[1].rep_id, 1);
    fs::remove_all(dir);
}

TEST(Adapter, ComplexSamplesBecomeMagnitudes) {
    const auto dir = scratch_dir("complex");
    write_file(dir / "x.csv", "A,T,AX,AY,TX,TY,FP,R,re0,re1,im0,im1\n0,0,0,0,1,0,0,100,3,0,4,-2\n");
    auto a = toy_adapter(2);
    a.cir_real_prefix = "re";
    a.cir_imag_prefix = "im";
    const auto res = ingest_public_dataset(dir.string(), a);
    ASSERT_EQ(res.records.size(), 1u);
    EXPECT_DOUBLE_EQ(res.records[0].samples[0], 5.0);
    EXPECT_DOUBLE_EQ(res.records[0].samples[1], 2.0);
    fs::remove_all(dir);
}

TEST(Adapter, MissingColumnIsSchemaMismatch) {
    const auto dir = scratch_dir("schema");
    write_file(dir / "x.csv", "A,T,AX,AY,TX,TY,R,CIR0\n0,0,0,0,1,0,100,3\n");
    try {
        ingest_public_dataset(dir.string(), toy_adapter(1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
    }
    fs::remove_all(dir);
}

TEST(Adapter, EmptyAndMissingDirectories) {
    const auto dir = scratch_dir("empty");
    EXPECT_TRUE(ingest_public_dataset(dir.string(), toy_adapter(4)).records.empty());
    fs::remove_all(dir);
    EXPECT_THROW(ingest_public_dataset(dir.string(), toy_adapter(4)), Error);
}

TEST(Adapter, ConfigParsesColumnMappings) {
    const auto kv = KeyValueConfig::parse_string("delimiter = tab\nposition_scale = 1\ncol.tag_id = tag\nn_raw = 8\n");
    const auto a = AdapterConfig::from_config(kv);
    EXPECT_EQ(a.delimiter, '\t');
    EXPECT_EQ(a.position_scale, 1.0);
    EXPECT_EQ(a.columns.at("tag_id"), "tag");
    EXPECT_EQ(a.n_raw, 8u);
    EXPECT_FALSE(a.complex_cir());
}

TEST(ToaDataset, LabelIsWindowRelative) {
    PhysConstants k;
    auto r = sample_record(0, 0, 0, 300.0, 1.3 * k.cm_per_sample());
    r.first_path_idx = 300;
    const auto ds = make_toa_dataset({r});
    ASSERT_EQ(ds.labels.size(), 1u);
    // Absolute label 298.7, window origin 290.
    EXPECT_NEAR(ds.labels[0], 8.7, 1e-9);
    EXPECT_EQ(ds.record_index[0], 0u);
}

TEST(ToaDataset, UnlabeledAndAllZeroRecordsAreCounted) {
    auto a = sample_record(0, 0, 0, 300.0, std::nullopt);
    auto b = sample_record(1, 0, 0, 300.0, 0.0);
    std::fill(b.samples.begin(), b.samples.end(), 0.0);
    auto c = sample_record(2, 0, 0, 300.0, 0.0);
    const auto ds = make_toa_dataset({a, b, c});
    EXPECT_EQ(ds.missing_label, 1u);
    EXPECT_EQ(ds.all_zero, 1u);
    ASSERT_EQ(ds.windows.size(), 1u);
    EXPECT_EQ(ds.record_index[0], 2u);
    EXPECT_NEAR(ds.labels[0], 10.0, 1e-12);
}

TEST(ToaDataset, SimulatorLabelsMatchTrueArrival) {
    auto sc = environment_preset("office");
    sc.tag_points.resize(5);
    sc.n_reps = 2;
    const auto corpus = generate_corpus(sc);
    std::vector<CirRecord> recs;
    for (const auto& s : corpus.records) recs.push_back(s.record);
    const auto ds = make_toa_dataset(recs);
    ASSERT_EQ(ds.windows.size(), recs.size());
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        const double absolute = ds.labels[i] + ds.windows[i].origin();
        EXPECT_NEAR(absolute, corpus.records[ds.record_index[i]].true_toa, 1e-9);
    }
}

TEST(FpDataset, GroupsSimulatedCorpusIntoSets) {
    auto sc = environment_preset("house");
    sc.tag_points.resize(10);
    sc.n_reps = 3;
    const auto corpus = generate_corpus(sc);
    std::vector<CirRecord> recs;
    for (const auto& s : corpus.records) recs.push_back(s.record);
    const auto ds = make_fp_dataset(recs);
    ASSERT_EQ(ds.sets.size(), 30u);
    EXPECT_EQ(ds.incomplete, 0u);
    for (std::size_t s = 0; s < ds.sets.size(); ++s) {
        const auto& fp = ds.sets[s];
        EXPECT_EQ(fp.anchor_ids, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
        const auto& p = sc.tag_points[static_cast<std::size_t>(fp.tag_id)];
        EXPECT_EQ(fp.tag_pos.x, p.x);
        EXPECT_EQ(fp.tag_pos.y, p.y);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(recs[ds.record_index[s][c]].anchor_id, static_cast<int>(c));
    }
}

TEST(FpDataset, FullPresetHas2400Sets) {
    const auto sc = environment_preset("apartment");
    EXPECT_EQ(sc.tag_points.size() * static_cast<std::size_t>(sc.n_reps), 2400u);
}

TEST(FpDataset, MissingAnchorGetsZeroChannel) {
    std::vector<CirRecord> recs;
    for (int a = 0; a < 4; ++a) recs.push_back(sample_record(a, 0, 0, 300, 0.0));
    for (int a : {0, 1, 3}) recs.push_back(sample_record(a, 1, 0, 300, 0.0));
    const auto ds = make_fp_dataset(recs);
    ASSERT_EQ(ds.sets.size(), 2u);
    EXPECT_TRUE(ds.sets[0].complete);
    EXPECT_FALSE(ds.sets[1].complete);
    EXPECT_EQ(ds.incomplete, 1u);
    EXPECT_EQ(ds.record_index[1][2], kMissingRecord);
    for (double v : ds.sets[1].windows[2].values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(ds.sets[1].windows.size(), 4u);
}

TEST(Split, SizesFollowQuotas) {
    SplitPlan plan;
    const auto s = split(100, plan, 0);
    EXPECT_EQ(s.train.size(), 70u);
    EXPECT_EQ(s.val.size(), 15u);
    EXPECT_EQ(s.test.size(), 15u);
}

TEST(Split, PartitionIsDisjointAndCoveringForManySizes) {
    SplitPlan plan;
    plan.base_seed = 99;
    for (std::size_t n = 1; n <= 1000; n += 37) {
        const auto s = split(n, plan, static_cast<int>(n % 5));
        std::vector<int> seen(n, 0);
        for (const auto* v : {&s.train, &s.val, &s.test}) {
            for (auto i : *v) ++seen.at(i);
        }
        for (int c : seen) EXPECT_EQ(c, 1);
        EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.7 * n), 0.5 + 1e-9);
    }
}

TEST(Split, RepetitionsDifferAndAreReproducible) {
    SplitPlan plan;
    plan.base_seed = 5;
    const auto a = split(200, plan, 0);
    const auto b = split(200, plan, 1);
    const auto a2 = split(200, plan, 0);
    EXPECT_NE(a.test, b.test);
    EXPECT_EQ(a.test, a2.test);
    EXPECT_EQ(a.train, a2.train);
}

TEST(Split, ExplicitSeedsOverrideDerivation) {
    SplitPlan p1, p2;
    p1.seeds = {42};
    p2.base_seed = 1234;
    p2.seeds = {42};
    EXPECT_EQ(split(50, p1, 0).test, split(50, p2, 0).test);
}

TEST(Split, InvalidPlansAreRejected) {
    SplitPlan p;
    p.train = 0.8;
    EXPECT_THROW(split(10, p, 0), Error);
    EXPECT_THROW(split(0, SplitPlan{}, 0), Error);
}

TEST(Split, GroupSplitKeepsGroupsTogether) {
    std::vector<int> group;
    for (int g = 0; g < 40; ++g) {
        for (int k = 0; k < 5; ++k) group.push_back(g * 3);
    }
    const auto s = split_by_group(group, SplitPlan{}, 2);
    std::map<int, std::set<int>> parts;
    for (auto i : s.train) parts[group[i]].insert(0);
    for (auto i : s.val) parts[group[i]].insert(1);
    for (auto i : s.test) parts[group[i]].insert(2);
    EXPECT_EQ(parts.size(), 40u);
    for (const auto& [g, p] : parts) EXPECT_EQ(p.size(), 1u) << g;
    EXPECT_EQ(s.train.size(), 28u * 5);
}

TEST(Split, JsonRoundTrip) {
    const auto s = split(30, SplitPlan{}, 3);
    const auto back = split_from_json(split_to_json(s, 3, 77));
    EXPECT_EQ(back.train, s.train);
    EXPECT_EQ(back.val, s.val);
    EXPECT_EQ(back.test, s.test);
    EXPECT_THROW(split_from_json(nlohmann::json{{"train", 1}}), Error);
}

}  // namespace
}  // namespace uwbpos

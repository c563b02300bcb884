// SPDX-License-Identifier: Apache-2.0
//
// csipos - CSI fingerprint positioning toolkit
// Copyright (C) 2026 The csipos Authors
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

#include "csipos/semi_supervised.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <limits>

using namespace csipos;
using csipos::testing::TempDir;
using csipos::testing::tiny_scene;

namespace {

nn::ModelConfig small_model(const SceneConfig &scene)
{
    nn::ModelConfig mc = nn::default_backbone_config(input_shape(scene, 8), 1, 4, 2, 16);
    set_output_normalization(mc, scene);
    mc.init_seed = 5;
    return mc;
}

SemiConfig quick_semi()
{
    SemiConfig c;
    c.r = 5.0;
    c.pretrain.epochs = 10;
    c.pretrain.batch_size = 16;
    c.finetune.epochs = 2;
    c.finetune.batch_size = 16;
    c.stage3.epochs = 3;
    c.stage3.batch_size = 16;
    return c;
}

double mean_error(const nn::Checkpoint &ck, const Dataset &ds, std::span<const std::size_t> idx)
{
    const auto p = predict_positions(nn::restore_model(ck), ds, idx);
    double e = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j)
        e += oracle::euclid(p[j], ds.truth[idx[j]]);
    return e / double(idx.size());
}

} // namespace

TEST(PseudoLabelRule, Examples)
{
    const auto rej = make_pseudo_label(1, {10, 10}, {10, 13}, 2.0);
    EXPECT_FALSE(rej.accepted);
    EXPECT_FALSE(rej.label.has_value());
    EXPECT_DOUBLE_EQ(rej.agreement_m, 3.0);

    const auto acc = make_pseudo_label(1, {10, 10}, {10, 13}, 4.0);
    EXPECT_TRUE(acc.accepted);
    ASSERT_TRUE(acc.label.has_value());
    EXPECT_EQ(*acc.label, (Vec2{10.0, 11.5}));

    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_TRUE(make_pseudo_label(1, {0, 0}, {1e6, -1e6}, inf).accepted);
    EXPECT_FALSE(make_pseudo_label(1, {0, 0}, {0, 1e-9}, 0.0).accepted);
    EXPECT_THROW(make_pseudo_label(1, {0, 0}, {0, 1}, -1.0), ConfigError);
    EXPECT_THROW(make_pseudo_label(1, {0, 0}, {0, 1}, std::nan("")), ConfigError);
    EXPECT_THROW(make_pseudo_label(1, {0, std::nan("")}, {0, 1}, 1.0), NumericError);
}

TEST(PseudoLabelRule, SoundAndMonotoneInR)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 4.0);
    for (int i = 0; i < 10000; ++i) {
        const Vec2 a{g(rng), g(rng)}, b{g(rng), g(rng)};
        const double r1 = std::abs(g(rng)), r2 = r1 + std::abs(g(rng));
        const auto p1 = make_pseudo_label(i, a, b, r1), p2 = make_pseudo_label(i, a, b, r2);
        EXPECT_DOUBLE_EQ(p1.agreement_m, oracle::euclid(a, b));
        EXPECT_EQ(p1.accepted, oracle::euclid(a, b) <= r1);
        EXPECT_EQ(p1.label.has_value(), p1.accepted);
        if (p1.accepted) {
            EXPECT_TRUE(p2.accepted);
            EXPECT_NEAR(p1.label->x, 0.5 * (a.x + b.x), 1e-12);
            EXPECT_NEAR(p1.label->y, 0.5 * (a.y + b.y), 1e-12);
        }
    }
}

TEST(SemiConfigJson, RoundTripAndValidation)
{
    SemiConfig c = quick_semi();
    c.target_mode = PseudoTargetMode::labeled_interpolated;
    Diagnostics diag;
    EXPECT_EQ(semi_config_from_json(semi_config_to_json(c), "semi", diag), c);
    EXPECT_TRUE(diag.empty());

    c.r = 0.0;
    c.max_rounds = 0;
    const auto issues = check_semi_config(c, "semi");
    ASSERT_EQ(issues.size(), 2u);
    EXPECT_NE(issues[0].find("semi_supervised distance threshold"), std::string::npos) << issues[0];
}

class SemiFixture : public ::testing::Test {
  protected:
    static void SetUpTestSuite()
    {
        SceneConfig cfg = tiny_scene(13);
        cfg.labeled_fraction = 0.3;
        ds_ = new Dataset(generate_dataset(cfg));
        stage1_ = new nn::Checkpoint(stage1_pretrain(*ds_, small_model(cfg), quick_semi(), "hash"));
    }
    static void TearDownTestSuite()
    {
        delete stage1_;
        delete ds_;
    }
    static inline Dataset *ds_ = nullptr;
    static inline nn::Checkpoint *stage1_ = nullptr;
};

TEST_F(SemiFixture, Stage1TagAndDeterminism)
{
    EXPECT_EQ(stage1_->stage, "stage1");
    EXPECT_EQ(stage1_->dataset_hash, "hash");
    const auto again = stage1_pretrain(*ds_, small_model(ds_->config), quick_semi(), "hash");
    EXPECT_EQ(nn::checkpoint_hash(again), nn::checkpoint_hash(*stage1_));
}

TEST_F(SemiFixture, Stage2RecordsObeyTheRule)
{
    const auto unl = unlabeled_indices(*ds_);
    ASSERT_EQ(unl.size(), 70u);
    SemiConfig c = quick_semi();
    const Stage2Result res = stage2_pseudo_label(*stage1_, *ds_, unl, c, 1);
    ASSERT_EQ(res.records.size(), unl.size());
    EXPECT_EQ(res.model_a.stage, "stage2/round-1/A");
    for (std::size_t j = 0; j < unl.size(); ++j) {
        const auto &r = res.records[j];
        EXPECT_EQ(r.sample_index, unl[j]);
        EXPECT_EQ(r.sample_id, ds_->samples[unl[j]].id);
        EXPECT_EQ(r.round, 1u);
        EXPECT_DOUBLE_EQ(r.agreement_m, oracle::euclid(r.pos_a, r.pos_b));
        EXPECT_EQ(r.accepted, r.agreement_m <= c.r);
        if (r.accepted) {
            EXPECT_NEAR(r.label->x, 0.5 * (r.pos_a.x + r.pos_b.x), 1e-12);
            EXPECT_NEAR(r.label->y, 0.5 * (r.pos_a.y + r.pos_b.y), 1e-12);
        }
    }

    // Same models with a larger r: accepted set can only grow.
    c.r = 10.0;
    const Stage2Result wide = stage2_pseudo_label(*stage1_, *ds_, unl, c, 1);
    for (std::size_t j = 0; j < unl.size(); ++j) {
        EXPECT_EQ(wide.records[j].pos_a, res.records[j].pos_a);
        if (res.records[j].accepted)
            EXPECT_TRUE(wide.records[j].accepted);
    }
}

TEST_F(SemiFixture, Stage2Errors)
{
    SemiConfig c = quick_semi();
    const auto unl = unlabeled_indices(*ds_);
    c.r = 0.0;
    EXPECT_THROW(stage2_pseudo_label(*stage1_, *ds_, unl, c, 1), ConfigError);
    c.r = 5.0;
    EXPECT_THROW(stage2_pseudo_label(*stage1_, *ds_, std::span<const std::size_t>{}, c, 1), ConfigError);
}

TEST_F(SemiFixture, Stage3TrainingSetAndDegenerateUnion)
{
    const SemiConfig c = quick_semi();
    const auto unl = unlabeled_indices(*ds_);
    std::vector<PseudoLabelRecord> recs;
    for (std::size_t j = 0; j < unl.size(); ++j) {
        auto r = make_pseudo_label(ds_->samples[unl[j]].id, ds_->truth[unl[j]], ds_->truth[unl[j]],
                                   j % 3 == 0 ? 1.0 : 1e-300);
        if (j % 3 != 0) // force a mix of rejected records
            r = make_pseudo_label(r.sample_id, {0, 0}, {0, 1}, 0.5);
        r.sample_index = unl[j];
        recs.push_back(r);
    }
    std::size_t accepted = 0;
    for (const auto &r : recs)
        accepted += r.accepted;
    const std::size_t labeled = labeled_indices(*ds_).size();
    EXPECT_EQ(stage3_training_size(*ds_, recs), labeled + accepted);

    const auto ck = stage3_finetune(*stage1_, *ds_, recs, c, 2);
    EXPECT_EQ(ck.stage, "stage3/round-2");
    EXPECT_EQ(ck.extra.at("training_size").get<std::size_t>(), labeled + accepted);

    std::vector<PseudoLabelRecord> rejected_only;
    for (const auto &r : recs)
        if (!r.accepted)
            rejected_only.push_back(r);
    const auto none = stage3_finetune(*stage1_, *ds_, {}, c, 1);
    const auto rej = stage3_finetune(*stage1_, *ds_, rejected_only, c, 1);
    EXPECT_EQ(none.weights, rej.weights);
    EXPECT_EQ(none.extra.at("training_size").get<std::size_t>(), labeled);
}

TEST_F(SemiFixture, SingleRoundIterationEqualsManualStages)
{
    SemiConfig c = quick_semi();
    c.max_rounds = 1;
    std::size_t callbacks = 0;
    const SemiResult res = iterate_from(*stage1_, *ds_, c, [&](const RoundResult &) { ++callbacks; });
    ASSERT_EQ(res.rounds.size(), 1u);
    EXPECT_EQ(callbacks, 1u);
    const auto unl = unlabeled_indices(*ds_);
    const auto s2 = stage2_pseudo_label(*stage1_, *ds_, unl, c, 1);
    const auto s3 = stage3_finetune(*stage1_, *ds_, s2.records, c, 1);
    EXPECT_EQ(nn::checkpoint_hash(res.rounds[0].checkpoint), nn::checkpoint_hash(s3));
}

TEST_F(SemiFixture, RoundsAreLogged)
{
    SemiConfig c = quick_semi();
    c.max_rounds = 3;
    // Everything is accepted each round, so zero growth never triggers the stop.
    c.r = 1e9;
    c.min_growth = 0.0;
    std::vector<std::size_t> seen;
    const SemiResult res = iterate_from(*stage1_, *ds_, c, [&](const RoundResult &r) { seen.push_back(r.round); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
    ASSERT_EQ(res.rounds.size(), 3u);
    EXPECT_EQ(res.final_checkpoint().stage, "stage3/round-3");
    for (const auto &r : res.rounds)
        for (const auto &rec : r.records)
            EXPECT_EQ(rec.round, r.round);
}

TEST_F(SemiFixture, FixmatchBaselineLabelsAreWeakPredictions)
{
    const SemiConfig c = quick_semi();
    const auto unl = unlabeled_indices(*ds_);
    const BaselineResult b = fixmatch_distance_baseline(*stage1_, *ds_, unl, c);
    ASSERT_EQ(b.records.size(), unl.size());
    EXPECT_EQ(b.checkpoint.stage, "fixmatch");
    for (const auto &r : b.records) {
        EXPECT_EQ(r.accepted, r.agreement_m <= c.r);
        if (r.accepted)
            EXPECT_EQ(*r.label, r.pos_a);
    }
}

TEST(Stage1, LossHalvesOnHundredLabeledSamples)
{
    SceneConfig cfg = tiny_scene(17);
    cfg.labeled_fraction = 1.0;
    const Dataset ds = generate_dataset(cfg);
    ASSERT_EQ(ds.labeled_count(), 100u);
    SemiConfig c = quick_semi();
    c.pretrain.epochs = 50;
    c.pretrain.noise_rel = 0.1;
    const nn::ModelConfig mc = small_model(cfg);
    const auto ck = stage1_pretrain(ds, mc, c);
    const auto loss = ck.extra.at("epoch_loss").get<std::vector<double>>();
    ASSERT_EQ(loss.size(), 50u);
    EXPECT_LE(loss.back(), 0.5 * loss.front());

    const auto all = labeled_indices(ds);
    nn::Model<float> untrained(mc);
    const auto before = nn::make_checkpoint(untrained, nn::Optimizer<float>(), 0, "init", "");
    EXPECT_LT(mean_error(ck, ds, all), mean_error(before, ds, all));
}

TEST(Stage1, NeedsLabels)
{
    Dataset ds = generate_dataset(tiny_scene());
    for (auto &s : ds.samples)
        s.position.reset();
    EXPECT_THROW(stage1_pretrain(ds, small_model(ds.config), quick_semi()), ConfigError);
}

TEST(PseudoLabelCsv, Columns)
{
    TempDir dir("pl");
    std::vector<PseudoLabelRecord> recs{make_pseudo_label(4, {1, 2}, {1, 3}, 5.0, 2),
                                        make_pseudo_label(5, {1, 2}, {9, 3}, 5.0, 2)};
    write_pseudo_label_csv(recs, dir.file("p.csv"));
    std::ifstream in(dir.file("p.csv"));
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    EXPECT_EQ(header, "sample_id,ax,ay,bx,by,agreement,accepted,round,label_x,label_y");
    EXPECT_EQ(row1.substr(0, 2), "4,");
    EXPECT_NE(row1.find(",1,2,1,2.5"), std::string::npos) << row1;
    EXPECT_EQ(row2.substr(row2.size() - 6), ",0,2,,") << row2;
}

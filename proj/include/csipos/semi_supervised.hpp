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

#pragma once

#include "csipos/config_reader.hpp"
#include "csipos/nn/checkpoint.hpp"
#include "csipos/nn/train.hpp"
#include "csipos/positioning_models.hpp"
#include "csipos/scene_channel.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csipos {

struct PseudoLabelRecord {
    std::uint64_t sample_id = 0;
    std::size_t sample_index = 0; // position in the dataset's sample list
    Vec2 pos_a;
    Vec2 pos_b;
    double agreement_m = 0.0;
    bool accepted = false;
    std::optional<Vec2> label;
    std::size_t round = 1;
};

// Applies the distance rule: accepted iff |pos_a - pos_b| <= r, label at the midpoint.
PseudoLabelRecord make_pseudo_label(std::uint64_t sample_id, const Vec2 &pos_a, const Vec2 &pos_b, double r,
                                    std::size_t round = 1);

// What models A and B are fine-tuned on in the pseudo-labelling stage.
enum class PseudoTargetMode {
    self_prediction,       // unlabeled samples, targets from the generator model
    self_prediction_mixed, // the same plus the labeled samples with their true labels
    labeled_interpolated,  // only the labeled samples, inputs passed through the interpolation
};

struct SemiConfig {
    double r = 5.0;
    std::size_t max_rounds = 2;
    double min_growth = 0.01;
    nn::TrainOptions pretrain;
    nn::TrainOptions finetune;     // models A and B
    nn::TrainOptions stage3;
    std::uint64_t seed_a = 101;
    std::uint64_t seed_b = 202;
    PseudoTargetMode target_mode = PseudoTargetMode::self_prediction_mixed;
    double pseudo_weight = 1.0;
    // Baseline augmentations, relative noise levels.
    double weak_noise_rel = 0.05;
    double strong_noise_rel = 0.3;
    bool verbose = false;

    friend bool operator==(const SemiConfig &, const SemiConfig &) = default;
};

json semi_config_to_json(const SemiConfig &config);
SemiConfig semi_config_from_json(const json &node, const std::string &path, Diagnostics &diag);
Diagnostics check_semi_config(const SemiConfig &config, const std::string &path);

std::vector<std::size_t> labeled_indices(const Dataset &dataset);
std::vector<std::size_t> unlabeled_indices(const Dataset &dataset);

// Stage 1: supervised training on the labeled samples.
nn::Checkpoint stage1_pretrain(const Dataset &dataset, const nn::ModelConfig &model, const SemiConfig &config,
                               const std::string &dataset_hash = "");

struct Stage2Result {
    std::vector<PseudoLabelRecord> records;
    nn::Checkpoint model_a;
    nn::Checkpoint model_b;
};

// Stage 2: fine-tune two copies of `generator` on interpolation variants A/B and
// keep the unlabeled samples the two copies agree on.
Stage2Result stage2_pseudo_label(const nn::Checkpoint &generator, const Dataset &dataset,
                                 std::span<const std::size_t> unlabeled, const SemiConfig &config,
                                 std::size_t round = 1);

// Stage 3: fine-tune `pretrained` on the labeled samples plus accepted records.
nn::Checkpoint stage3_finetune(const nn::Checkpoint &pretrained, const Dataset &dataset,
                               std::span<const PseudoLabelRecord> records, const SemiConfig &config,
                               std::size_t round = 1);

// Number of samples the last stage-3 fine-tune was given.
std::size_t stage3_training_size(const Dataset &dataset, std::span<const PseudoLabelRecord> records);

struct RoundResult {
    std::size_t round = 0;
    std::vector<PseudoLabelRecord> records;
    std::size_t accepted = 0;
    nn::Checkpoint checkpoint;
};

struct SemiResult {
    nn::Checkpoint stage1;
    std::vector<RoundResult> rounds;
    const nn::Checkpoint &final_checkpoint() const { return rounds.empty() ? stage1 : rounds.back().checkpoint; }
};

using RoundCallback = std::function<void(const RoundResult &)>;

// Stage 1 then rounds of stage 2 + stage 3. Each round's generator is the
// previous round's stage-3 model; stage 3 always restarts from stage 1.
SemiResult iterate(const Dataset &dataset, const nn::ModelConfig &model, const SemiConfig &config,
                   const std::string &dataset_hash = "", const RoundCallback &on_round = {});
// Continues from an existing stage-1 checkpoint.
SemiResult iterate_from(const nn::Checkpoint &stage1, const Dataset &dataset, const SemiConfig &config,
                        const RoundCallback &on_round = {});

struct BaselineResult {
    std::vector<PseudoLabelRecord> records; // pos_a weak, pos_b strong, label = pos_a
    nn::Checkpoint checkpoint;
};

// Single-model self-training with a distance-based consistency threshold.
BaselineResult fixmatch_distance_baseline(const nn::Checkpoint &pretrained, const Dataset &dataset,
                                          std::span<const std::size_t> unlabeled, const SemiConfig &config);

void write_pseudo_label_csv(std::span<const PseudoLabelRecord> records, const std::string &path);

} // namespace csipos

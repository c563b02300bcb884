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
#include "csipos/evaluation.hpp"
#include "csipos/nn/checkpoint.hpp"
#include "csipos/nn/model.hpp"
#include "csipos/nn/train.hpp"
#include "csipos/scene_channel.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace csipos {

enum class Combiner { uniform_mean, inverse_error_weighted, coordinate_median };

std::string combiner_name(Combiner c);
// Accepts the full names and the short forms mean, weighted, median.
Combiner parse_combiner(const std::string &name);

struct MemberSpec {
    std::string name;
    nn::ModelConfig model;
    nn::TrainOptions train;
};

struct EnsembleSpec {
    std::vector<MemberSpec> members;
    Combiner combiner = Combiner::uniform_mean;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0; // validation split
};

json ensemble_spec_to_json(const EnsembleSpec &spec);
EnsembleSpec ensemble_spec_from_json(const json &node, const std::string &path, Diagnostics &diag);
Diagnostics check_ensemble_spec(const EnsembleSpec &spec, const std::string &path);

// Two depths x two widths plus a re-seeded copy of the first member.
EnsembleSpec default_ensemble_spec(const nn::ModelConfig &base, const nn::TrainOptions &train, std::uint64_t seed);

struct PoolMember {
    std::string name;
    nn::Checkpoint checkpoint;
    double validation_mse = 0.0; // mean squared error, m^2
    double validation_mean_error_m = 0.0;
};

struct Pool {
    std::vector<PoolMember> members;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> validation_indices;
};

// Trains every member on the same labeled training split.
Pool train_pool(const EnsembleSpec &spec, const Dataset &dataset, const std::string &dataset_hash = "");

// Normalized combination weights; uniform unless inverse_error_weighted.
std::vector<double> combiner_weights(std::span<const double> validation_mse, Combiner combiner);

Vec2 combine(std::span<const Vec2> predictions, Combiner combiner, std::span<const double> weights = {});

struct EnsembleReport {
    std::vector<EvalReport> members;
    EvalReport combined;
    std::vector<Vec2> combined_predictions;
    // Largest per-sample excess of the averaged prediction's squared error over
    // the members' mean squared error; <= 0 when Jensen's bound holds.
    double max_jensen_excess = 0.0;
    bool jensen_holds = true;
};

// Relative slack for floating-point rounding in the Jensen check.
inline constexpr double kJensenRelTol = 1e-12;

EnsembleReport evaluate_predictions(const std::vector<std::vector<Vec2>> &member_predictions,
                                    std::span<const double> validation_mse, Combiner combiner,
                                    std::span<const Vec2> truths, std::span<const SampleMeta> meta);

EnsembleReport evaluate_ensemble(const Pool &pool, Combiner combiner, const Dataset &dataset,
                                 std::span<const std::size_t> test_indices);

void save_pool(const Pool &pool, const std::string &dir);
Pool load_pool(const std::string &dir);

} // namespace csipos

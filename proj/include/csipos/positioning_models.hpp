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

#include "csipos/csi_transform.hpp"
#include "csipos/nn/checkpoint.hpp"
#include "csipos/nn/model.hpp"
#include "csipos/nn/train.hpp"
#include "csipos/scene_channel.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csipos {

// ---- model inputs ---------------------------------------------------------

using InputFn = std::function<void(std::size_t index, std::size_t epoch, std::span<float> dst)>;

struct InputOptions {
    // Std of complex noise added to the CSI, relative to its RMS amplitude.
    double noise_rel = 0.0;
    std::uint64_t seed = 0;
    std::optional<InterpVariant> variant;
    std::size_t delay_taps = 0; // 0 keeps the full delay axis
};

// Angle-delay magnitude inputs for a list of CSI tensors. Without noise the
// encoded inputs are computed once up front; with noise each (index, epoch)
// pair draws from its own RNG stream.
InputFn make_input_fn(std::vector<std::shared_ptr<const CsiTensor>> csi, const InputOptions &opts);

nn::Shape input_shape(const SceneConfig &config, std::size_t delay_taps = 0);

// Output normalization centred on the BS with a scale matching the cell radius.
void set_output_normalization(nn::ModelConfig &model, const SceneConfig &scene);

// Single-head position regression on a subset of a dataset.
struct PositionTargets {
    std::vector<std::size_t> indices; // into dataset.samples
    std::vector<Vec2> labels;
    std::vector<double> weights; // empty means uniform
};

nn::TrainHistory train_positions(nn::Model<float> &model, nn::Optimizer<float> &opt, const Dataset &dataset,
                                 const PositionTargets &targets, const nn::TrainOptions &opts,
                                 std::uint64_t &step_counter);

// The delay truncation is taken from the model's input width.
std::vector<Vec2> predict_positions(const nn::Model<float> &model, const Dataset &dataset,
                                    std::span<const std::size_t> indices, InputOptions inputs = {});

// Input options matching a model's input shape.
InputOptions model_inputs(const nn::ModelConfig &model, double noise_rel = 0.0, std::uint64_t seed = 0,
                          std::optional<InterpVariant> variant = std::nullopt);

// ---- sector rotation -------------------------------------------------------

struct SectorRotation {
    Vec2 center;
    double angle_deg = 0.0;
};

Vec2 rotate_coordinates(const Vec2 &p, const SectorRotation &rotation);

// Rotation mapping `from` sector's boresight onto `to` sector's, wrapped to (-180, 180].
SectorRotation sector_rotation(const SceneConfig &config, std::uint8_t from, std::uint8_t to);

// Every sample of `dataset`, relabelled as belonging to `target`. Labels of
// samples from other sectors are rotated; CSI is shared, not copied.
Dataset build_virtual_sector_dataset(const Dataset &dataset, std::uint8_t target);

// ---- decoupled heads -------------------------------------------------------

enum class RoutingPolicy { known, nearest_centroid };

std::string routing_policy_name(RoutingPolicy p);
RoutingPolicy parse_routing_policy(const std::string &name);

// Per-sector mean of the angle and delay marginals of the model input.
using SectorCentroids = std::array<std::vector<double>, kSectorCount>;
std::vector<double> sector_signature(const CsiTensor &csi);
SectorCentroids compute_sector_centroids(const Dataset &dataset);

struct DecoupledTrainOptions {
    nn::TrainOptions train;
    double noise_rel = 0.0;
    // Weight of samples whose label is a pseudo-label (ids in `pseudo`).
    double pseudo_weight = 1.0;
};

struct PseudoLabel {
    std::uint64_t sample_index = 0;
    Vec2 label;
};

// Shared backbone with one head per sector. All three virtual sector datasets
// are mixed into each batch; a sample only trains the head it is routed to.
class DecoupledHeadModel {
  public:
    DecoupledHeadModel(nn::ModelConfig config, SceneConfig scene);
    DecoupledHeadModel(const nn::Checkpoint &ckpt, SceneConfig scene);

    const nn::Model<float> &model() const { return model_; }
    nn::Model<float> &model() { return model_; }
    const SceneConfig &scene() const { return scene_; }

    void set_centroids(SectorCentroids c) { centroids_ = std::move(c); }
    const std::optional<SectorCentroids> &centroids() const { return centroids_; }

    nn::TrainHistory train(const Dataset &dataset, std::span<const PseudoLabel> pseudo,
                           const DecoupledTrainOptions &opts);

    // Head chosen for a sample under `policy`.
    std::uint8_t route(const Sample &sample, RoutingPolicy policy) const;

    // Predictions for `indices` of `dataset` in the sample's own frame.
    std::vector<Vec2> predict(const Dataset &dataset, std::span<const std::size_t> indices,
                              RoutingPolicy policy = RoutingPolicy::known) const;
    // Raw output of a specific head for every index (no routing, no rotation).
    std::vector<Vec2> predict_head(const Dataset &dataset, std::span<const std::size_t> indices,
                                   std::uint8_t head) const;

    nn::Checkpoint checkpoint(std::string stage, std::string dataset_hash) const;

  private:
    nn::Model<float> model_;
    nn::Optimizer<float> optimizer_;
    SceneConfig scene_;
    std::optional<SectorCentroids> centroids_;
    std::uint64_t steps_ = 0;
};

nn::ModelConfig default_decoupled_config(const SceneConfig &scene, std::size_t delay_taps = 0,
                                         std::uint64_t init_seed = 1);

} // namespace csipos

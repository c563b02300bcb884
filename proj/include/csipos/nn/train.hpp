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
#include "csipos/nn/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace csipos::nn {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.0; // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const OptimizerConfig &, const OptimizerConfig &) = default;
};

// First/second moment buffers (sgd keeps its velocity in `m`).
struct OptimizerState {
    std::uint64_t t = 0;
    std::vector<double> m;
    std::vector<double> v;
};

template <typename T> class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}
    Optimizer(OptimizerConfig config, OptimizerState state) : config_(config), state_(std::move(state)) {}

    void step(std::span<T> params, std::span<const T> grad);

    const OptimizerConfig &config() const { return config_; }
    OptimizerConfig &config() { return config_; }
    const OptimizerState &state() const { return state_; }

  private:
    OptimizerConfig config_;
    OptimizerState state_;
};

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    OptimizerConfig optimizer;
    // Relative std of CSI-domain noise applied on the fly; consumed by input providers.
    double noise_rel = 0.0;
    std::uint64_t seed = 0;
    bool verbose = false;

    friend bool operator==(const TrainOptions &, const TrainOptions &) = default;
};

json train_options_to_json(const TrainOptions &opts);
TrainOptions train_options_from_json(const json &node, const std::string &path, Diagnostics &diag);
Diagnostics check_train_options(const TrainOptions &opts, const std::string &path);

// Supervised examples for regression. `input(i, epoch, dst)` writes example i's model
// input for the given epoch (epoch-dependent augmentation is allowed, but must be
// deterministic in (i, epoch)).
template <typename T> struct TrainData {
    std::size_t size = 0;
    std::function<void(std::size_t, std::size_t, std::span<T>)> input;
    std::vector<double> targets;    // size * output_dim, output units
    std::vector<std::uint8_t> heads; // empty or size entries
    std::vector<double> weights;     // empty or size entries
};

struct TrainHistory {
    std::vector<double> epoch_loss;
    std::uint64_t steps = 0;
};

// Weighted mean squared Euclidean error in normalized units:
// L = sum_i w_i |pred_i - target_i|^2 / sum_i w_i. Writes dL/dpred into grad.
template <typename T>
double mse_loss(const Batch<T> &pred, std::span<const double> targets_raw, std::span<const double> weights,
                Batch<T> &grad);

// One optimizer step on a batch; returns the loss before the update. Throws
// NumericError (with parameter norms) when the loss is not finite.
template <typename T>
double backward_and_step(Model<T> &model, Optimizer<T> &opt, const Batch<T> &inputs, std::span<const std::uint8_t> heads,
                         std::span<const double> targets_raw, std::span<const double> weights, Workspace<T> &ws);

// Mini-batch training with per-epoch seeded shuffling. `step_counter` is advanced by
// the number of optimizer steps taken.
template <typename T>
TrainHistory train(Model<T> &model, Optimizer<T> &opt, const TrainData<T> &data, const TrainOptions &opts,
                   std::uint64_t &step_counter);

// Predictions in output units, n * output_dim values.
template <typename T>
std::vector<double> predict(const Model<T> &model, std::size_t n,
                            const std::function<void(std::size_t, std::span<T>)> &input,
                            std::span<const std::uint8_t> heads = {}, std::size_t batch_size = 256);

} // namespace csipos::nn

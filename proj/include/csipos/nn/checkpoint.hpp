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
#include "csipos/nn/train.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace csipos::nn {

// Trained model snapshot. File layout (little-endian):
//   magic "CPNN" | version u32 | config hash (64 hex chars) | step u64 |
//   metadata length u32 | metadata JSON (model config, optimizer, provenance) |
//   blob count u32 | per blob: name length u16 | name | count u64 | f32 values |
//   end marker "NNPC"
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelConfig config;
    std::vector<float> weights;
    OptimizerConfig optimizer;
    std::uint64_t optimizer_t = 0;
    std::vector<float> optimizer_m;
    std::vector<float> optimizer_v;
    std::uint64_t step = 0;
    std::string stage;
    std::string dataset_hash;
    json extra = json::object();
};

Checkpoint make_checkpoint(const Model<float> &model, const Optimizer<float> &opt, std::uint64_t step,
                           std::string stage, std::string dataset_hash);
Model<float> restore_model(const Checkpoint &ckpt);
// lr_scale multiplies the stored learning rate (fine-tuning continues at a reduced rate).
Optimizer<float> restore_optimizer(const Checkpoint &ckpt, double lr_scale = 1.0);

void save_checkpoint(const Checkpoint &ckpt, std::ostream &out);
void save_checkpoint(const Checkpoint &ckpt, const std::string &path);
Checkpoint load_checkpoint(std::istream &in);
Checkpoint load_checkpoint(const std::string &path);
// Also verifies the stored config hash against `expected`.
Checkpoint load_checkpoint(const std::string &path, const ModelConfig &expected);

// SHA-256 of the serialized checkpoint bytes.
std::string checkpoint_hash(const Checkpoint &ckpt);

} // namespace csipos::nn

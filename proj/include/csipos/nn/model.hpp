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
#include "csipos/nn/layers.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace csipos::nn {

// Shared backbone followed by n_heads identical, independently weighted heads.
// Outputs are regressed in normalized units: value = output_center + output_scale * raw.
struct ModelConfig {
    Shape input;
    std::vector<LayerSpec> backbone;
    std::vector<LayerSpec> head;
    std::size_t n_heads = 1;
    std::vector<double> output_center;
    double output_scale = 1.0;
    std::uint64_t init_seed = 1;

    std::size_t output_dim() const { return head.empty() ? 0 : head.back().units; }
    friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

json model_config_to_json(const ModelConfig &config);
ModelConfig model_config_from_json(const json &node, const std::string &path, Diagnostics &diag);
// Shape composition and range checks; empty when the config builds.
Diagnostics check_model_config(const ModelConfig &config);

// Hex SHA-256 of the canonical architecture description (init_seed excluded, since
// a checkpoint's weights supersede the initializer).
std::string config_hash(const ModelConfig &config);

// Default CNN regressor for [channels x angle x delay] inputs: three conv/pool blocks
// and two fully connected layers.
ModelConfig default_backbone_config(const Shape &input, std::size_t n_heads = 1, std::size_t width = 8,
                                    std::size_t depth = 3, std::size_t hidden = 64);

template <typename T> struct Workspace {
    struct HeadState {
        std::vector<std::size_t> rows;
        Batch<T> input;
        std::vector<Batch<T>> acts;
        std::vector<LayerScratch> scratch;
    };
    const Batch<T> *input = nullptr;
    std::vector<Batch<T>> acts;
    std::vector<LayerScratch> scratch;
    std::vector<HeadState> heads;
    Batch<T> grad_a;
    Batch<T> grad_b;
    Batch<T> feature_grad;
};

template <typename T> class Model {
  public:
    explicit Model(const ModelConfig &config);
    Model(const Model &other);
    Model &operator=(const Model &other);
    Model(Model &&) noexcept = default;
    Model &operator=(Model &&) noexcept = default;
    ~Model() = default;

    const ModelConfig &config() const { return config_; }
    std::span<T> params() { return params_; }
    std::span<const T> params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<ParamBlob> &blobs() const { return blobs_; }
    std::size_t output_dim() const { return config_.output_dim(); }
    std::size_t n_heads() const { return config_.n_heads; }
    Shape feature_shape() const;

    // Raw (normalized) outputs, shape (n, output_dim). `heads` routes each sample;
    // empty routes everything to head 0.
    void forward(const Batch<T> &in, std::span<const std::uint8_t> heads, Batch<T> &out, Workspace<T> &ws) const;
    // Backbone features only.
    void features(const Batch<T> &in, Batch<T> &out, Workspace<T> &ws) const;
    // Accumulates dL/dparams into `grad` for the most recent forward on `ws`.
    // grad_out holds dL/d(raw output) and is consumed.
    void backward(Workspace<T> &ws, Batch<T> &grad_out, std::span<T> grad) const;

    double to_output(double raw, std::size_t dim) const;
    double to_raw(double value, std::size_t dim) const;

    // "name: L2 norm" lines, used in numeric error diagnostics.
    std::string describe_param_norms() const;

  private:
    void build();
    void run_backbone(const Batch<T> &in, Workspace<T> &ws) const;

    ModelConfig config_;
    std::vector<std::unique_ptr<Layer<T>>> backbone_;
    std::vector<std::size_t> backbone_offset_;
    std::vector<std::vector<std::unique_ptr<Layer<T>>>> heads_;
    std::vector<std::vector<std::size_t>> head_offset_;
    std::vector<ParamBlob> blobs_;
    AlignedVector<T> params_;
};

extern template class Model<float>;
extern template class Model<double>;

} // namespace csipos::nn

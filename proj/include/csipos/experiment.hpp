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
#include "csipos/ensemble.hpp"
#include "csipos/nn/model.hpp"
#include "csipos/nn/train.hpp"
#include "csipos/positioning_models.hpp"
#include "csipos/scene_channel.hpp"
#include "csipos/semi_supervised.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csipos {

inline constexpr const char *kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr const char *kRunDirEnv = "CSIPOS_RUN_DIR";

enum class ExperimentMode { semi, ensemble, decoupled };

struct ModelShapeConfig {
    std::size_t width = 8;
    std::size_t depth = 3;
    std::size_t hidden = 64;

    friend bool operator==(const ModelShapeConfig &, const ModelShapeConfig &) = default;
};

struct EnsembleSection {
    Combiner combiner = Combiner::uniform_mean;
    double validation_fraction = 0.1;
    nn::TrainOptions train;
};

struct DecoupledSection {
    nn::TrainOptions train;
    RoutingPolicy routing = RoutingPolicy::known;
    // Adds accepted pseudo-labels from one semi-supervised round to the training set.
    bool use_pseudo_labels = false;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name = "experiment";
    // Drives the scene and, via sub-streams, every training seed.
    std::uint64_t seed = 0;
    unsigned threads = 0;
    SceneConfig scene;
    std::size_t delay_taps = 0;
    ModelShapeConfig model;
    ExperimentMode mode = ExperimentMode::semi;
    SemiConfig semi;
    bool fixmatch_baseline = true;
    EnsembleSection ensemble;
    DecoupledSection decoupled;
    bool write_features = true;
};

std::string mode_name(ExperimentMode m);

json experiment_to_json(const ExperimentConfig &config);
ExperimentConfig experiment_from_json(const json &node, Diagnostics &diag);
Diagnostics check_experiment(const ExperimentConfig &config);

// All diagnostics for a config file; empty means valid.
Diagnostics validate_config(const std::string &path);
// Throws ConfigError listing every diagnostic.
ExperimentConfig load_experiment(const std::string &path);

// Effective per-stage settings, with seeds derived from the experiment seed.
nn::ModelConfig experiment_model_config(const ExperimentConfig &config, std::size_t n_heads = 1);
SemiConfig experiment_semi_config(const ExperimentConfig &config);
EnsembleSpec experiment_ensemble_spec(const ExperimentConfig &config);
DecoupledTrainOptions experiment_decoupled_options(const ExperimentConfig &config);

struct ArtifactRecord {
    std::string role;
    std::string path; // relative to the run directory
    std::string sha256;
};

struct ExperimentManifest {
    std::string run_dir;
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    json config;
    std::string dataset_hash;
    std::map<std::string, std::string> checkpoint_hashes; // stage -> sha256
    std::vector<ArtifactRecord> artifacts;
    std::vector<std::string> reports;
    std::string started_utc;
    std::string finished_utc;
};

json manifest_to_json(const ExperimentManifest &m);

// Run root: the environment variable wins, then `cli_value`, then "runs".
std::string resolve_run_root(const std::optional<std::string> &cli_value);
// Creates and returns the first unused run-NNNN directory under `root`.
std::string create_run_dir(const std::string &root);

struct RunOptions {
    std::optional<std::string> run_root;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

ExperimentManifest run_pipeline(const std::string &config_path, const RunOptions &options = {});
ExperimentManifest run_experiment(const ExperimentConfig &config, const std::string &run_dir, bool verbose = false);

// Re-hashes every artifact listed in a manifest; returns mismatch descriptions.
std::vector<std::string> verify_manifest(const std::string &manifest_path);

} // namespace csipos

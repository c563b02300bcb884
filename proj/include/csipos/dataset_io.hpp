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
#include "csipos/scene_channel.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace csipos {

json scene_config_to_json(const SceneConfig &config);
// Strict parse; unknown keys and type errors are appended to `diag`. Missing keys keep defaults.
SceneConfig scene_config_from_json(const json &node, const std::string &path, Diagnostics &diag);

// Container layout (little-endian):
//   magic "CPLB" | format_version u32 | sample count u64 | dims u16 x 3 |
//   config blob length u32 | config UTF-8 JSON |
//   per sample: id u64 | sector u8 | los u8 | has_label u8 | label 2 x f64 | payload f32...
// Version 1 payloads are CSI as interleaved re/im in [u][b][k] order.
// Version 2 payloads are real model-input features, dims [channels][angle][delay].
inline constexpr char kDatasetMagic[4] = {'C', 'P', 'L', 'B'};
inline constexpr std::uint32_t kFeatureFormatVersion = 2;

void write_dataset(const Dataset &dataset, std::ostream &out);
void write_dataset(const Dataset &dataset, const std::string &path);
Dataset read_dataset(std::istream &in);
Dataset read_dataset(const std::string &path);

struct FeatureRecord {
    std::uint64_t id = 0;
    std::uint8_t sector = 0;
    bool is_los = true;
    std::optional<Vec2> position;
    std::vector<float> values;
};

struct FeatureFile {
    std::array<std::uint16_t, 3> dims{};
    SceneConfig config;
    std::vector<FeatureRecord> records;
};

void write_feature_file(const FeatureFile &file, const std::string &path);
FeatureFile read_feature_file(const std::string &path);

// Simulator ground truth sidecar: CSV {id,x,y,sector,los}.
void write_truth_csv(const Dataset &dataset, const std::string &path);
// Fills dataset.truth from a sidecar written for the same dataset.
void read_truth_csv(Dataset &dataset, const std::string &path);

} // namespace csipos

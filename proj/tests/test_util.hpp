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

#include "csipos/scene_channel.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace csipos::testing {

// Small scene that generates in well under a second.
inline SceneConfig tiny_scene(std::uint64_t seed = 7)
{
    SceneConfig c;
    c.n_rx_per_sector = {40, 30, 30};
    c.rx_grid_spacing_m = 2.0;
    c.n_freq_bins = 16;
    c.comb_stride = 32;
    c.ta_max_s = 20e-9;
    c.rx_max_distance_m = 200.0;
    c.scatterer_region = {-100.0, -300.0, 300.0, 100.0};
    c.labeled_fraction = 0.3;
    c.seed = seed;
    return c;
}

inline CsiTensor random_csi(std::size_t n_ue, std::size_t n_bs, std::size_t n_freq, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    CsiTensor t(n_ue, n_bs, n_freq);
    for (auto &v : t.values())
        v = {g(rng), g(rng)};
    return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string &tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("csipos-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    std::string file(const std::string &name) const { return (path_ / name).string(); }
    const std::filesystem::path &path() const { return path_; }

  private:
    std::filesystem::path path_;
};

} // namespace csipos::testing

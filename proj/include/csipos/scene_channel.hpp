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

#include "csipos/common.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace csipos {

inline constexpr std::size_t kSectorCount = 3;
inline constexpr std::uint8_t kUnknownSector = 0xFF;

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    friend bool operator==(const BoundingBox &, const BoundingBox &) = default;
};

// Scene and measurement parameters. Defaults reproduce the full-size three-sector
// layout (40817 receivers, 2 x 32 x 408 CSI); desk-scale runs override counts and bins.
struct SceneConfig {
    Vec3 bs_position{100.0, -100.0, 30.0};
    double carrier_hz = 3.5e9;
    double subcarrier_spacing_hz = 30e3;
    std::size_t comb_stride = 8;
    std::size_t n_freq_bins = 408;
    std::size_t n_ue_ant = 2;
    std::size_t bs_array_rows = 8; // horizontal elements
    std::size_t bs_array_cols = 4; // vertical elements
    double element_spacing_wavelengths = 0.5;
    std::array<double, kSectorCount> sector_boresights_deg{0.0, 120.0, 240.0};
    std::array<std::size_t, kSectorCount> n_rx_per_sector{21745, 6764, 12308};
    double rx_height_m = 1.5;
    double rx_grid_spacing_m = 1.0;
    double rx_min_distance_m = 5.0;
    double rx_max_distance_m = 400.0;
    std::size_t n_scatterers = 24;
    double scatterer_height_m = 10.0;
    BoundingBox scatterer_region{-200.0, -400.0, 400.0, 200.0};
    double reflection_magnitude = 0.5;
    std::size_t n_buildings = 16;
    double building_radius_min_m = 5.0;
    double building_radius_max_m = 15.0;
    double penetration_loss_db = 20.0;
    double labeled_fraction = 0.10;
    double snr_db = 20.0; // +inf disables noise
    double ta_max_s = 0.5e-6;
    std::uint64_t seed = 0;

    std::size_t n_bs_ant() const { return bs_array_rows * bs_array_cols; }
    std::size_t total_receivers() const { return n_rx_per_sector[0] + n_rx_per_sector[1] + n_rx_per_sector[2]; }
    double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
    // Frequency of bin k relative to band start.
    double bin_frequency_hz(std::size_t k) const
    {
        return static_cast<double>(k) * subcarrier_spacing_hz * static_cast<double>(comb_stride);
    }
    Vec2 bs_ground() const { return {bs_position.x, bs_position.y}; }

    friend bool operator==(const SceneConfig &, const SceneConfig &) = default;
};

// Returns one message per violated constraint; empty when the configuration is usable.
std::vector<std::string> check_scene_config(const SceneConfig &config);
// Throws ConfigError listing every violated constraint.
void validate_scene_config(const SceneConfig &config);

// Complex channel matrix, shape [UE antennas x BS ports x frequency bins], stored in
// [u][b][k] order.
class CsiTensor {
  public:
    CsiTensor() = default;
    CsiTensor(std::size_t n_ue, std::size_t n_bs, std::size_t n_freq)
        : n_ue_(n_ue), n_bs_(n_bs), n_freq_(n_freq), data_(n_ue * n_bs * n_freq)
    {
    }

    std::size_t n_ue() const { return n_ue_; }
    std::size_t n_bs() const { return n_bs_; }
    std::size_t n_freq() const { return n_freq_; }
    std::size_t size() const { return data_.size(); }

    cplx &operator()(std::size_t u, std::size_t b, std::size_t k) { return data_[(u * n_bs_ + b) * n_freq_ + k]; }
    const cplx &operator()(std::size_t u, std::size_t b, std::size_t k) const
    {
        return data_[(u * n_bs_ + b) * n_freq_ + k];
    }

    std::span<cplx> values() { return data_; }
    std::span<const cplx> values() const { return data_; }

    bool same_shape(const CsiTensor &other) const
    {
        return n_ue_ == other.n_ue_ && n_bs_ == other.n_bs_ && n_freq_ == other.n_freq_;
    }
    double frobenius_norm() const;
    double mean_power() const;

    friend bool operator==(const CsiTensor &, const CsiTensor &) = default;

  private:
    std::size_t n_ue_ = 0;
    std::size_t n_bs_ = 0;
    std::size_t n_freq_ = 0;
    std::vector<cplx> data_;
};

struct PathSet {
    std::vector<double> delays_s;
    std::vector<double> azimuths_rad;   // departure azimuth at the BS, global frame
    std::vector<double> elevations_rad; // departure elevation at the BS
    std::vector<cplx> gains;
    bool is_los = true;

    std::size_t size() const { return delays_s.size(); }
};

struct Sample {
    std::uint64_t id = 0;
    std::shared_ptr<const CsiTensor> csi;
    std::optional<Vec2> position;
    std::uint8_t sector = 0;
    bool is_los = true;
    // Sector the sample was measured in; differs from `sector` only in virtual
    // sector datasets. Not serialized.
    std::uint8_t origin_sector = 0;
};

struct Dataset {
    static constexpr std::uint32_t kCsiFormatVersion = 1;

    std::vector<Sample> samples;
    SceneConfig config;
    std::uint64_t seed = 0;
    std::uint32_t format_version = kCsiFormatVersion;
    // Simulator ground truth for every sample, indexed like `samples`. Held for
    // evaluation only and never serialized into the dataset file.
    std::vector<Vec2> truth;

    std::size_t labeled_count() const;
    std::array<std::size_t, kSectorCount> sector_counts() const;
};

struct Receiver {
    Vec2 position;
    std::uint8_t sector = 0;
};

struct Building {
    Vec2 center;
    double radius_m = 0.0;
};

// Static environment shared by all receivers of a dataset.
struct Scene {
    std::vector<Vec3> scatterers;
    std::vector<cplx> reflection; // per-scatterer complex reflection coefficient
    std::vector<Building> buildings;
};

// Receivers on a regular grid centred on the BS ground point. Each sector takes the
// grid points inside its 120 degree wedge, nearest to the BS first.
std::vector<Receiver> place_receivers(const SceneConfig &config);

Scene make_scene(const SceneConfig &config);

bool segment_blocked(const Vec2 &from, const Vec2 &to, const std::vector<Building> &buildings);

PathSet solve_paths(const Vec2 &rx_position, const Scene &scene, const SceneConfig &config);

// UPA response for departure (azimuth, elevation) in the frame of `sector`.
// Port index b = row * cols + col, rows along the horizontal axis.
std::vector<cplx> bs_steering_vector(double azimuth_rad, double elevation_rad, std::uint8_t sector,
                                     const SceneConfig &config);

// Per-path UE response, [path][ue antenna], unit-modulus random phases.
std::vector<cplx> random_ue_response(std::size_t n_paths, std::size_t n_ue_ant, std::mt19937_64 &rng);

// ue_response may be empty (all ones) or hold n_paths * n_ue_ant entries.
CsiTensor synthesize_csi(const PathSet &paths, std::uint8_t sector, const SceneConfig &config,
                         std::span<const cplx> ue_response = {});

// Timing advance as a per-bin phase ramp, then AWGN at the requested SNR relative to
// the mean element power. snr_db = +inf skips the noise.
CsiTensor apply_ta_and_noise(const CsiTensor &csi, double ta_s, double snr_db, const SceneConfig &config,
                             std::mt19937_64 &rng);

// Exactly round(fraction * n) distinct indices, sorted ascending.
std::vector<std::size_t> select_labeled(std::size_t n, double fraction, std::uint64_t seed);

Dataset generate_dataset(const SceneConfig &config);

} // namespace csipos

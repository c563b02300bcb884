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

#include "csipos/scene_channel.hpp"
#include "csipos/dataset_io.hpp"
#include "csipos/hash.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace csipos;
using csipos::testing::tiny_scene;

namespace {

double wrap_deg(double a)
{
    a = std::remainder(a, 360.0);
    return a;
}

} // namespace

TEST(PlaceReceivers, OnePerSectorInsideWedge)
{
    SceneConfig c;
    c.n_rx_per_sector = {1, 1, 1};
    const auto rx = place_receivers(c);
    ASSERT_EQ(rx.size(), 3u);
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(rx[s].sector, s);
        const double az = std::atan2(rx[s].position.y - c.bs_position.y, rx[s].position.x - c.bs_position.x) * 180.0 / kPi;
        EXPECT_LE(std::abs(wrap_deg(az - c.sector_boresights_deg[s])), 60.0 + 1e-9);
    }
}

TEST(PlaceReceivers, GridNeighbourDistanceIsSpacing)
{
    SceneConfig c;
    c.n_rx_per_sector = {100, 100, 100};
    c.rx_grid_spacing_m = 1.0;
    const auto rx = place_receivers(c);
    ASSERT_EQ(rx.size(), 300u);
    for (std::size_t i = 0; i < rx.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < rx.size(); ++j)
            if (i != j)
                best = std::min(best, distance(rx[i].position, rx[j].position));
        EXPECT_NEAR(best, 1.0, 1e-9) << "receiver " << i;
    }
}

TEST(PlaceReceivers, FullSizeCounts)
{
    SceneConfig c;
    const auto rx = place_receivers(c);
    std::array<std::size_t, 3> counts{};
    for (const auto &r : rx)
        ++counts[r.sector];
    EXPECT_EQ(counts[0], 21745u);
    EXPECT_EQ(counts[1], 6764u);
    EXPECT_EQ(counts[2], 12308u);
    EXPECT_EQ(rx.size(), 40817u);
    EXPECT_EQ(select_labeled(rx.size(), 0.10, 0).size(), 4082u);
}

TEST(PlaceReceivers, OverfullWedgeNamesSector)
{
    SceneConfig c;
    c.rx_max_distance_m = 20.0;
    c.n_rx_per_sector = {10, 100000, 10};
    try {
        place_receivers(c);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("sector 1"), std::string::npos) << e.what();
    }
}

TEST(SceneConfigCheck, DefaultsMatchReferenceLayout)
{
    SceneConfig c;
    EXPECT_TRUE(check_scene_config(c).empty());
    EXPECT_EQ(c.bs_position, (Vec3{100.0, -100.0, 30.0}));
    EXPECT_DOUBLE_EQ(c.carrier_hz, 3.5e9);
    EXPECT_DOUBLE_EQ(c.subcarrier_spacing_hz, 30e3);
    EXPECT_EQ(c.n_bs_ant(), 32u);
    EXPECT_EQ(c.n_ue_ant, 2u);
    EXPECT_EQ(c.n_freq_bins, 408u);
    EXPECT_DOUBLE_EQ(c.labeled_fraction, 0.10);
}

TEST(SceneConfigCheck, RejectsBadValues)
{
    SceneConfig c;
    c.labeled_fraction = 0.0;
    c.n_freq_bins = 0;
    c.sector_boresights_deg = {0.0, 90.0, 240.0};
    const auto issues = check_scene_config(c);
    EXPECT_GE(issues.size(), 3u);
    EXPECT_THROW(validate_scene_config(c), ConfigError);
}

TEST(SolvePaths, LosOnlyDelayIsGeometric)
{
    SceneConfig c;
    const Vec2 rx{100.0 + 299.85, -100.0};
    const PathSet p = solve_paths(rx, Scene{}, c);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(p.is_los);
    const double d3 = std::sqrt(299.85 * 299.85 + 28.5 * 28.5);
    EXPECT_NEAR(p.delays_s[0], d3 / kSpeedOfLight, 1e-18);
    EXPECT_NEAR(std::abs(p.gains[0]), 1.0 / d3, 1e-15);
}

TEST(SolvePaths, CollinearScattererBeyondReceiverIsLater)
{
    SceneConfig c;
    Scene s;
    s.scatterers = {{300.0, -100.0, c.rx_height_m}};
    s.reflection = {cplx(0.5, 0.0)};
    const PathSet p = solve_paths({200.0, -100.0}, s, c);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_GT(p.delays_s[1], p.delays_s[0]);
}

TEST(SolvePaths, BounceDelaysNeverBeatLos)
{
    SceneConfig c = tiny_scene(3);
    c.n_scatterers = 20;
    c.n_buildings = 0;
    const Scene s = make_scene(c);
    ASSERT_EQ(s.scatterers.size(), 20u);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-150.0, 150.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec2 rx{100.0 + u(rng), -100.0 + u(rng)};
        const PathSet p = solve_paths(rx, s, c);
        ASSERT_EQ(p.size(), 21u);
        EXPECT_TRUE(p.is_los);
        for (std::size_t k = 0; k < p.size(); ++k) {
            EXPECT_GT(p.delays_s[k], 0.0);
            EXPECT_GE(p.delays_s[k], p.delays_s[0]);
            if (k > 0)
                EXPECT_GE(p.delays_s[k], p.delays_s[k - 1]);
        }
        EXPECT_EQ(p.azimuths_rad.size(), p.size());
        EXPECT_EQ(p.elevations_rad.size(), p.size());
        EXPECT_EQ(p.gains.size(), p.size());
    }
}

TEST(SolvePaths, BlockedReceiverKeepsAttenuatedLos)
{
    SceneConfig c;
    Scene s;
    s.buildings = {{{150.0, -100.0}, 10.0}};
    const PathSet p = solve_paths({200.0, -100.0}, s, c);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_FALSE(p.is_los);
    const double d3 = std::hypot(100.0, 28.5);
    EXPECT_NEAR(std::abs(p.gains[0]), std::pow(10.0, -c.penetration_loss_db / 20.0) / d3, 1e-15);
}

TEST(Steering, UnitMagnitude)
{
    SceneConfig c;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> az(-kPi, kPi), el(-kPi / 2, kPi / 2);
    for (int t = 0; t < 1000; ++t) {
        const auto a = bs_steering_vector(az(rng), el(rng), static_cast<std::uint8_t>(t % 3), c);
        ASSERT_EQ(a.size(), c.n_bs_ant());
        for (const auto &v : a)
            EXPECT_NEAR(std::abs(v), 1.0, 1e-12);
    }
}

TEST(Synthesize, BoresightZeroDelayIsFlat)
{
    SceneConfig c = tiny_scene();
    PathSet p;
    p.delays_s = {0.0};
    p.azimuths_rad = {0.0};
    p.elevations_rad = {0.0};
    p.gains = {cplx(0.3, -0.4)};
    const CsiTensor h = synthesize_csi(p, 0, c);
    for (const auto &v : h.values())
        EXPECT_NEAR(std::abs(v - p.gains[0]), 0.0, 1e-12);
}

TEST(Synthesize, AdjacentBinPhaseStep)
{
    SceneConfig c = tiny_scene();
    const double tau = 137e-9;
    PathSet p;
    p.delays_s = {tau};
    p.azimuths_rad = {0.4};
    p.elevations_rad = {-0.1};
    p.gains = {cplx(1.0, 0.0)};
    const CsiTensor h = synthesize_csi(p, 0, c);
    const double df = c.subcarrier_spacing_hz * static_cast<double>(c.comb_stride);
    const cplx expected = std::polar(1.0, -2.0 * kPi * df * tau);
    for (std::size_t b = 0; b < h.n_bs(); ++b)
        for (std::size_t k = 0; k + 1 < h.n_freq(); ++k)
            EXPECT_NEAR(std::abs(h(0, b, k + 1) / h(0, b, k) - expected), 0.0, 1e-9);
}

TEST(Synthesize, OppositePhasePathsCancelAtChosenBin)
{
    SceneConfig c = tiny_scene();
    const std::size_t kstar = 5;
    const double fk = c.bin_frequency_hz(kstar);
    const double tau1 = 50e-9;
    // Phase gap of pi at bin k*: (tau2 - tau1) * f_k = 1/2.
    const double tau2 = tau1 + 0.5 / fk;
    PathSet p;
    p.delays_s = {tau1, tau2};
    p.azimuths_rad = {0.2, 0.2};
    p.elevations_rad = {0.0, 0.0};
    p.gains = {cplx(1.0, 0.0), cplx(1.0, 0.0)};
    const CsiTensor h = synthesize_csi(p, 0, c);
    for (std::size_t u = 0; u < h.n_ue(); ++u)
        for (std::size_t b = 0; b < h.n_bs(); ++b) {
            EXPECT_NEAR(std::abs(h(u, b, kstar)), 0.0, 1e-9);
            EXPECT_GT(std::abs(h(u, b, kstar + 1)), 1e-3);
        }
}

TEST(Synthesize, FrobeniusTriangleBound)
{
    SceneConfig c = tiny_scene(9);
    const Scene s = make_scene(c);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const PathSet p = solve_paths({100.0 + 5.0 * t, -60.0 - 3.0 * t}, s, c);
        const auto ue = random_ue_response(p.size(), c.n_ue_ant, rng);
        const CsiTensor h = synthesize_csi(p, 0, c, ue);
        double sum = 0.0;
        for (const auto &g : p.gains)
            sum += std::abs(g);
        const double bound = sum * std::sqrt(double(c.n_ue_ant * c.n_bs_ant() * c.n_freq_bins));
        EXPECT_LE(h.frobenius_norm(), bound * (1.0 + 1e-12));
    }
}

TEST(TimingAdvance, IdentityWithoutTaOrNoise)
{
    SceneConfig c = tiny_scene();
    const CsiTensor h = csipos::testing::random_csi(2, 32, 16, 4);
    std::mt19937_64 rng(1);
    const CsiTensor out = apply_ta_and_noise(h, 0.0, std::numeric_limits<double>::infinity(), c, rng);
    EXPECT_TRUE(out == h);
}

TEST(TimingAdvance, PreservesMagnitudeAndAppliesRamp)
{
    SceneConfig c = tiny_scene();
    const CsiTensor h = csipos::testing::random_csi(2, 32, 16, 4);
    const double span = c.bin_frequency_hz(c.n_freq_bins - 1);
    const double ta = std::min(1.0 / (2.0 * span), c.ta_max_s);
    std::mt19937_64 rng(1);
    const CsiTensor out = apply_ta_and_noise(h, ta, std::numeric_limits<double>::infinity(), c, rng);
    for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t b = 0; b < 32; ++b)
            for (std::size_t k = 0; k < 16; ++k) {
                EXPECT_NEAR(std::abs(out(u, b, k)), std::abs(h(u, b, k)), 1e-12);
                const cplx ramp = std::polar(1.0, -2.0 * kPi * c.bin_frequency_hz(k) * ta);
                EXPECT_NEAR(std::abs(out(u, b, k) - h(u, b, k) * ramp), 0.0, 1e-12);
            }
}

TEST(TimingAdvance, EmpiricalSnr)
{
    SceneConfig c = tiny_scene();
    c.n_freq_bins = 1563; // 2 * 32 * 1563 = 100032 elements
    const CsiTensor h = csipos::testing::random_csi(2, 32, c.n_freq_bins, 8);
    std::mt19937_64 rng(123);
    const CsiTensor out = apply_ta_and_noise(h, 0.0, 10.0, c, rng);
    double sig = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        sig += std::norm(h.values()[i]);
        noise += std::norm(out.values()[i] - h.values()[i]);
    }
    EXPECT_NEAR(10.0 * std::log10(sig / noise), 10.0, 0.2);
}

TEST(TimingAdvance, RejectsBadArguments)
{
    SceneConfig c = tiny_scene();
    const CsiTensor h = csipos::testing::random_csi(2, 32, 16, 4);
    std::mt19937_64 rng(1);
    EXPECT_THROW(apply_ta_and_noise(h, 0.0, std::numeric_limits<double>::quiet_NaN(), c, rng), std::invalid_argument);
    EXPECT_THROW(apply_ta_and_noise(h, -1e-9, 10.0, c, rng), std::invalid_argument);
    EXPECT_THROW(apply_ta_and_noise(h, 2.0 * c.ta_max_s, 10.0, c, rng), std::invalid_argument);
}

TEST(GenerateDataset, CountsShapesAndLabels)
{
    const SceneConfig c = tiny_scene();
    const Dataset ds = generate_dataset(c);
    ASSERT_EQ(ds.samples.size(), 100u);
    EXPECT_EQ(ds.sector_counts(), (std::array<std::size_t, 3>{40, 30, 30}));
    EXPECT_EQ(ds.labeled_count(), 30u);
    ASSERT_EQ(ds.truth.size(), 100u);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample &s = ds.samples[i];
        EXPECT_EQ(s.csi->n_ue(), c.n_ue_ant);
        EXPECT_EQ(s.csi->n_bs(), c.n_bs_ant());
        EXPECT_EQ(s.csi->n_freq(), c.n_freq_bins);
        if (s.position)
            EXPECT_EQ(*s.position, ds.truth[i]);
    }
}

TEST(GenerateDataset, AllLabeledWhenFractionIsOne)
{
    SceneConfig c = tiny_scene();
    c.labeled_fraction = 1.0;
    EXPECT_EQ(generate_dataset(c).labeled_count(), 100u);
}

TEST(GenerateDataset, DeterministicBytes)
{
    const SceneConfig c = tiny_scene(21);
    std::ostringstream a, b;
    write_dataset(generate_dataset(c), a);
    write_dataset(generate_dataset(c), b);
    EXPECT_EQ(sha256_hex(a.str()), sha256_hex(b.str()));

    SceneConfig other = c;
    other.seed = 22;
    std::ostringstream d;
    write_dataset(generate_dataset(other), d);
    EXPECT_NE(sha256_hex(a.str()), sha256_hex(d.str()));
}

TEST(GenerateDataset, ThreadCountDoesNotChangeOutput)
{
    const SceneConfig c = tiny_scene(5);
    const unsigned before = thread_count();
    set_thread_count(1);
    std::ostringstream a;
    write_dataset(generate_dataset(c), a);
    set_thread_count(3);
    std::ostringstream b;
    write_dataset(generate_dataset(c), b);
    set_thread_count(before);
    EXPECT_EQ(a.str(), b.str());
}

TEST(SelectLabeled, ExactCountSortedDistinct)
{
    for (std::size_t n : {1u, 7u, 100u, 40817u}) {
        const auto idx = select_labeled(n, 0.1, 3);
        EXPECT_EQ(idx.size(), static_cast<std::size_t>(std::llround(0.1 * double(n))));
        EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
        EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    }
}

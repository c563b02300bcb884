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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

namespace csipos {

namespace {

double deg2rad(double deg) { return deg * kPi / 180.0; }

double wrap_deg(double deg)
{
    double w = std::fmod(deg, 360.0);
    if (w < 0.0)
        w += 360.0;
    return w;
}

// Angle of `deg` measured from the start of the wedge of `boresight_deg`, in [0, 360).
double angle_into_wedge(double deg, double boresight_deg) { return wrap_deg(deg - (boresight_deg - 60.0)); }

std::uint8_t wedge_of(double azimuth_deg, const SceneConfig &config)
{
    std::uint8_t best = 0;
    double best_rel = 1e300;
    for (std::uint8_t s = 0; s < kSectorCount; ++s) {
        const double rel = angle_into_wedge(azimuth_deg, config.sector_boresights_deg[s]);
        if (rel < best_rel) {
            best_rel = rel;
            best = s;
        }
    }
    return best;
}

double point_segment_distance(const Vec2 &p, const Vec2 &a, const Vec2 &b)
{
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0)
        t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
    return std::hypot(a.x + t * vx - p.x, a.y + t * vy - p.y);
}

cplx unit_phase(double radians) { return std::polar(1.0, radians); }

} // namespace

std::vector<std::string> check_scene_config(const SceneConfig &c)
{
    std::vector<std::string> issues;
    auto require = [&](bool ok, const std::string &msg) {
        if (!ok)
            issues.push_back(msg);
    };
    require(c.n_freq_bins >= 1, "n_freq_bins must be >= 1");
    require(c.n_freq_bins <= 0xFFFF, "n_freq_bins must fit in 16 bits");
    require(c.n_ue_ant >= 1 && c.n_ue_ant <= 0xFFFF, "n_ue_ant must be in [1, 65535]");
    require(c.bs_array_rows >= 1 && c.bs_array_cols >= 1, "bs_array_rows and bs_array_cols must be positive");
    require(c.n_bs_ant() <= 0xFFFF, "bs array port count must fit in 16 bits");
    require(c.comb_stride >= 1, "comb_stride must be >= 1");
    require(c.carrier_hz > 0.0 && std::isfinite(c.carrier_hz), "carrier_hz must be positive");
    require(c.subcarrier_spacing_hz > 0.0 && std::isfinite(c.subcarrier_spacing_hz),
            "subcarrier_spacing_hz must be positive");
    require(c.element_spacing_wavelengths > 0.0, "element_spacing_wavelengths must be positive");
    for (std::size_t s = 0; s < kSectorCount; ++s)
        require(c.n_rx_per_sector[s] >= 1, "n_rx_per_sector[" + std::to_string(s) + "] must be positive");
    for (std::size_t s = 0; s < kSectorCount; ++s) {
        const double next = c.sector_boresights_deg[(s + 1) % kSectorCount];
        const double gap = wrap_deg(next - c.sector_boresights_deg[s]);
        require(std::abs(gap - 120.0) < 1e-9,
                "sector_boresights_deg must be mutually 120 degrees apart (sectors " + std::to_string(s) + " and " +
                    std::to_string((s + 1) % kSectorCount) + ")");
    }
    require(c.rx_grid_spacing_m > 0.0, "rx_grid_spacing_m must be positive");
    require(c.rx_min_distance_m >= 0.0 && c.rx_max_distance_m > c.rx_min_distance_m,
            "rx distance range must satisfy 0 <= rx_min_distance_m < rx_max_distance_m");
    require(c.rx_height_m < c.bs_position.z, "rx_height_m must be below the BS height");
    require(c.scatterer_region.x_max >= c.scatterer_region.x_min && c.scatterer_region.y_max >= c.scatterer_region.y_min,
            "scatterer_region must have max >= min");
    require(c.reflection_magnitude >= 0.0 && c.reflection_magnitude <= 1.0, "reflection_magnitude must be in [0, 1]");
    require(c.building_radius_min_m > 0.0 && c.building_radius_max_m >= c.building_radius_min_m,
            "building radii must satisfy 0 < min <= max");
    require(c.penetration_loss_db >= 0.0, "penetration_loss_db must be non-negative");
    require(c.labeled_fraction > 0.0 && c.labeled_fraction <= 1.0, "labeled_fraction must be in (0, 1]");
    require(!std::isnan(c.snr_db) && c.snr_db != -INFINITY, "snr_db must be finite or +inf");
    require(c.ta_max_s >= 0.0 && std::isfinite(c.ta_max_s), "ta_max_s must be finite and non-negative");
    return issues;
}

void validate_scene_config(const SceneConfig &config)
{
    const auto issues = check_scene_config(config);
    if (issues.empty())
        return;
    std::ostringstream msg;
    msg << "invalid scene configuration:";
    for (const auto &i : issues)
        msg << "\n  - " << i;
    throw ConfigError(msg.str());
}

double CsiTensor::frobenius_norm() const
{
    double acc = 0.0;
    for (const auto &v : data_)
        acc += std::norm(v);
    return std::sqrt(acc);
}

double CsiTensor::mean_power() const
{
    if (data_.empty())
        return 0.0;
    double acc = 0.0;
    for (const auto &v : data_)
        acc += std::norm(v);
    return acc / static_cast<double>(data_.size());
}

std::size_t Dataset::labeled_count() const
{
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const Sample &s) { return s.position.has_value(); }));
}

std::array<std::size_t, kSectorCount> Dataset::sector_counts() const
{
    std::array<std::size_t, kSectorCount> counts{};
    for (const auto &s : samples)
        if (s.sector < kSectorCount)
            ++counts[s.sector];
    return counts;
}

std::vector<Receiver> place_receivers(const SceneConfig &config)
{
    validate_scene_config(config);

    const double spacing = config.rx_grid_spacing_m;
    const auto reach = static_cast<long long>(std::ceil(config.rx_max_distance_m / spacing));
    const double r_min2 = config.rx_min_distance_m * config.rx_min_distance_m;
    const double r_max2 = config.rx_max_distance_m * config.rx_max_distance_m;

    // (squared grid radius, angle into wedge, i, j)
    using Candidate = std::tuple<long long, double, long long, long long>;
    std::array<std::vector<Candidate>, kSectorCount> per_sector;

    for (long long i = -reach; i <= reach; ++i) {
        for (long long j = -reach; j <= reach; ++j) {
            const long long cells2 = i * i + j * j;
            const double d2 = static_cast<double>(cells2) * spacing * spacing;
            if (d2 < r_min2 || d2 > r_max2)
                continue;
            const double az = wrap_deg(std::atan2(static_cast<double>(j), static_cast<double>(i)) * 180.0 / kPi);
            const std::uint8_t s = wedge_of(az, config);
            per_sector[s].emplace_back(cells2, angle_into_wedge(az, config.sector_boresights_deg[s]), i, j);
        }
    }

    std::vector<Receiver> out;
    out.reserve(config.total_receivers());
    const Vec2 origin = config.bs_ground();
    for (std::uint8_t s = 0; s < kSectorCount; ++s) {
        auto &cands = per_sector[s];
        const std::size_t want = config.n_rx_per_sector[s];
        if (cands.size() < want) {
            throw ConfigError("sector " + std::to_string(s) + " wedge holds only " + std::to_string(cands.size()) +
                              " grid points within rx_max_distance_m, cannot host " + std::to_string(want) +
                              " receivers");
        }
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(want), cands.end());
        for (std::size_t n = 0; n < want; ++n) {
            const auto &[cells2, rel, i, j] = cands[n];
            out.push_back({{origin.x + static_cast<double>(i) * spacing, origin.y + static_cast<double>(j) * spacing}, s});
        }
    }
    return out;
}

Scene make_scene(const SceneConfig &config)
{
    auto rng = make_rng(config.seed, RngStream::scene);
    const auto &box = config.scatterer_region;
    std::uniform_real_distribution<double> ux(box.x_min, box.x_max);
    std::uniform_real_distribution<double> uy(box.y_min, box.y_max);
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> uradius(config.building_radius_min_m, config.building_radius_max_m);

    Scene scene;
    scene.scatterers.reserve(config.n_scatterers);
    scene.reflection.reserve(config.n_scatterers);
    for (std::size_t n = 0; n < config.n_scatterers; ++n) {
        const double x = ux(rng);
        const double y = uy(rng);
        scene.scatterers.push_back({x, y, config.scatterer_height_m});
        scene.reflection.push_back(std::polar(config.reflection_magnitude, uphase(rng)));
    }

    const Vec2 bs = config.bs_ground();
    for (std::size_t n = 0; n < config.n_buildings; ++n) {
        // Buildings never enclose the BS mast.
        for (int attempt = 0; attempt < 1000; ++attempt) {
            Building b{{ux(rng), uy(rng)}, uradius(rng)};
            if (distance(b.center, bs) > b.radius_m + 1.0) {
                scene.buildings.push_back(b);
                break;
            }
        }
    }
    return scene;
}

bool segment_blocked(const Vec2 &from, const Vec2 &to, const std::vector<Building> &buildings)
{
    return std::any_of(buildings.begin(), buildings.end(), [&](const Building &b) {
        return point_segment_distance(b.center, from, to) < b.radius_m;
    });
}

PathSet solve_paths(const Vec2 &rx_position, const Scene &scene, const SceneConfig &config)
{
    const Vec3 bs = config.bs_position;
    const Vec2 bs2 = config.bs_ground();
    const Vec3 rx{rx_position.x, rx_position.y, config.rx_height_m};
    const double k0 = 2.0 * kPi * config.carrier_hz / kSpeedOfLight;

    struct Path {
        double delay, az, el;
        cplx gain;
    };
    std::vector<Path> paths;
    paths.reserve(scene.scatterers.size() + 1);

    auto departure = [&](const Vec3 &target, double &az, double &el) {
        const double dx = target.x - bs.x, dy = target.y - bs.y, dz = target.z - bs.z;
        az = std::atan2(dy, dx);
        el = std::atan2(dz, std::hypot(dx, dy));
    };

    const double d_los = distance(bs, rx);
    const bool los = !segment_blocked(bs2, rx_position, scene.buildings);
    {
        Path p{};
        p.delay = d_los / kSpeedOfLight;
        departure(rx, p.az, p.el);
        p.gain = unit_phase(-k0 * d_los) / d_los;
        if (!los)
            p.gain *= std::pow(10.0, -config.penetration_loss_db / 20.0);
        paths.push_back(p);
    }

    for (std::size_t n = 0; n < scene.scatterers.size(); ++n) {
        const Vec3 &s = scene.scatterers[n];
        const Vec2 s2{s.x, s.y};
        if (segment_blocked(bs2, s2, scene.buildings) || segment_blocked(s2, rx_position, scene.buildings))
            continue;
        const double total = distance(bs, s) + distance(s, rx);
        Path p{};
        p.delay = total / kSpeedOfLight;
        departure(s, p.az, p.el);
        p.gain = scene.reflection[n] * unit_phase(-k0 * total) / total;
        paths.push_back(p);
    }

    std::stable_sort(paths.begin() + 1, paths.end(), [](const Path &a, const Path &b) { return a.delay < b.delay; });

    PathSet out;
    out.is_los = los;
    for (const auto &p : paths) {
        out.delays_s.push_back(p.delay);
        out.azimuths_rad.push_back(p.az);
        out.elevations_rad.push_back(p.el);
        out.gains.push_back(p.gain);
    }
    return out;
}

std::vector<cplx> bs_steering_vector(double azimuth_rad, double elevation_rad, std::uint8_t sector,
                                     const SceneConfig &config)
{
    const double rel = azimuth_rad - deg2rad(config.sector_boresights_deg.at(sector));
    const double scale = 2.0 * kPi * config.element_spacing_wavelengths;
    const double h = scale * std::cos(elevation_rad) * std::sin(rel);
    const double v = scale * std::sin(elevation_rad);
    std::vector<cplx> a(config.n_bs_ant());
    for (std::size_t r = 0; r < config.bs_array_rows; ++r)
        for (std::size_t c = 0; c < config.bs_array_cols; ++c)
            a[r * config.bs_array_cols + c] = unit_phase(static_cast<double>(r) * h + static_cast<double>(c) * v);
    return a;
}

std::vector<cplx> random_ue_response(std::size_t n_paths, std::size_t n_ue_ant, std::mt19937_64 &rng)
{
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
    std::vector<cplx> out(n_paths * n_ue_ant);
    for (auto &v : out)
        v = unit_phase(uphase(rng));
    return out;
}

CsiTensor synthesize_csi(const PathSet &paths, std::uint8_t sector, const SceneConfig &config,
                         std::span<const cplx> ue_response)
{
    const std::size_t n_ue = config.n_ue_ant, n_bs = config.n_bs_ant(), n_freq = config.n_freq_bins;
    if (!ue_response.empty() && ue_response.size() != paths.size() * n_ue)
        throw std::invalid_argument("synthesize_csi: ue_response must hold n_paths * n_ue_ant entries");

    CsiTensor csi(n_ue, n_bs, n_freq);
    std::vector<cplx> ramp(n_freq);
    std::vector<cplx> spatial(n_ue * n_bs);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto a_bs = bs_steering_vector(paths.azimuths_rad[p], paths.elevations_rad[p], sector, config);
        for (std::size_t k = 0; k < n_freq; ++k)
            ramp[k] = unit_phase(-2.0 * kPi * config.bin_frequency_hz(k) * paths.delays_s[p]);
        for (std::size_t u = 0; u < n_ue; ++u) {
            const cplx a_ue = ue_response.empty() ? cplx(1.0, 0.0) : ue_response[p * n_ue + u];
            for (std::size_t b = 0; b < n_bs; ++b)
                spatial[u * n_bs + b] = paths.gains[p] * a_bs[b] * a_ue;
        }
        for (std::size_t u = 0; u < n_ue; ++u)
            for (std::size_t b = 0; b < n_bs; ++b) {
                const cplx w = spatial[u * n_bs + b];
                for (std::size_t k = 0; k < n_freq; ++k)
                    csi(u, b, k) += w * ramp[k];
            }
    }
    return csi;
}

CsiTensor apply_ta_and_noise(const CsiTensor &csi, double ta_s, double snr_db, const SceneConfig &config,
                             std::mt19937_64 &rng)
{
    if (std::isnan(snr_db) || snr_db == -INFINITY)
        throw std::invalid_argument("apply_ta_and_noise: snr_db must be finite or +inf");
    if (!(ta_s >= 0.0) || ta_s > config.ta_max_s)
        throw std::invalid_argument("apply_ta_and_noise: ta_s must lie in [0, ta_max_s]");

    CsiTensor out = csi;
    if (ta_s != 0.0) {
        std::vector<cplx> ramp(csi.n_freq());
        for (std::size_t k = 0; k < ramp.size(); ++k)
            ramp[k] = unit_phase(-2.0 * kPi * config.bin_frequency_hz(k) * ta_s);
        for (std::size_t u = 0; u < csi.n_ue(); ++u)
            for (std::size_t b = 0; b < csi.n_bs(); ++b)
                for (std::size_t k = 0; k < csi.n_freq(); ++k)
                    out(u, b, k) *= ramp[k];
    }

    if (snr_db == INFINITY)
        return out;
    const double noise_power = out.mean_power() / std::pow(10.0, snr_db / 10.0);
    if (noise_power <= 0.0)
        return out;
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
    for (auto &v : out.values()) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v += cplx(re, im);
    }
    return out;
}

std::vector<std::size_t> select_labeled(std::size_t n, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigError("labeled_fraction must be in (0, 1]");
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = make_rng(seed, RngStream::labels);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(count, n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

Dataset generate_dataset(const SceneConfig &config)
{
    validate_scene_config(config);
    const auto receivers = place_receivers(config);
    const Scene scene = make_scene(config);

    Dataset ds;
    ds.config = config;
    ds.seed = config.seed;
    ds.samples.resize(receivers.size());
    ds.truth.resize(receivers.size());

    parallel_for(receivers.size(), [&](std::size_t i) {
        const Receiver &rx = receivers[i];
        auto rng = make_rng(config.seed, RngStream::receiver, i);
        const PathSet paths = solve_paths(rx.position, scene, config);
        const auto ue = random_ue_response(paths.size(), config.n_ue_ant, rng);
        CsiTensor csi = synthesize_csi(paths, rx.sector, config, ue);
        std::uniform_real_distribution<double> uta(0.0, config.ta_max_s);
        const double ta = config.ta_max_s > 0.0 ? std::min(uta(rng), config.ta_max_s) : 0.0;
        csi = apply_ta_and_noise(csi, ta, config.snr_db, config, rng);
        // Quantize to the f32 storage precision so in-memory and reloaded datasets agree.
        for (auto &v : csi.values())
            v = cplx(static_cast<float>(v.real()), static_cast<float>(v.imag()));

        Sample &s = ds.samples[i];
        s.id = i;
        s.csi = std::make_shared<const CsiTensor>(std::move(csi));
        s.sector = rx.sector;
        s.origin_sector = rx.sector;
        s.is_los = paths.is_los;
        ds.truth[i] = rx.position;
    });

    for (std::size_t i : select_labeled(receivers.size(), config.labeled_fraction, config.seed))
        ds.samples[i].position = receivers[i].position;
    return ds;
}

} // namespace csipos

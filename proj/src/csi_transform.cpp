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

#include "csipos/csi_transform.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace csipos {

namespace {

// Planned FFTW transforms for one [n_bs x n_freq] slab: a forward DFT down the port
// axis for every bin, then an inverse DFT along each port's frequency row.
// Planning is serialized; execution on fresh arrays is thread-safe.
struct SlabPlans {
    fftw_plan port_axis = nullptr;
    fftw_plan freq_axis = nullptr;
    fftw_plan port_axis_inv = nullptr;
    fftw_plan freq_axis_inv = nullptr;
};

std::mutex g_plan_mutex;

const SlabPlans &plans_for(std::size_t n_bs, std::size_t n_freq)
{
    static std::map<std::pair<std::size_t, std::size_t>, SlabPlans> cache;
    std::lock_guard lock(g_plan_mutex);
    auto it = cache.find({n_bs, n_freq});
    if (it != cache.end())
        return it->second;

    std::vector<cplx> scratch(n_bs * n_freq);
    auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
    const int nb = static_cast<int>(n_bs), nf = static_cast<int>(n_freq);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    SlabPlans p;
    // Port axis: length n_bs, stride n_freq, one transform per bin.
    p.port_axis = fftw_plan_many_dft(1, &nb, nf, buf, nullptr, nf, 1, buf, nullptr, nf, 1, FFTW_FORWARD, flags);
    p.port_axis_inv = fftw_plan_many_dft(1, &nb, nf, buf, nullptr, nf, 1, buf, nullptr, nf, 1, FFTW_BACKWARD, flags);
    // Frequency axis: length n_freq, contiguous, one transform per port.
    p.freq_axis = fftw_plan_many_dft(1, &nf, nb, buf, nullptr, 1, nf, buf, nullptr, 1, nf, FFTW_BACKWARD, flags);
    p.freq_axis_inv = fftw_plan_many_dft(1, &nf, nb, buf, nullptr, 1, nf, buf, nullptr, 1, nf, FFTW_FORWARD, flags);
    if (!p.port_axis || !p.freq_axis || !p.port_axis_inv || !p.freq_axis_inv)
        throw std::runtime_error("FFTW planning failed");
    return cache.emplace(std::make_pair(n_bs, n_freq), p).first->second;
}

bool all_finite(std::span<const cplx> values)
{
    return std::all_of(values.begin(), values.end(),
                       [](const cplx &v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

} // namespace

double AngleDelayMap::frobenius_norm() const
{
    double acc = 0.0;
    for (const auto &v : values)
        acc += std::norm(v);
    return std::sqrt(acc);
}

AngleDelayMap to_angle_delay(const CsiTensor &csi, NormMode mode)
{
    if (!all_finite(csi.values()))
        throw std::invalid_argument("to_angle_delay: CSI contains non-finite values");
    AngleDelayMap map;
    map.n_ue = csi.n_ue();
    map.n_angle = csi.n_bs();
    map.n_delay = csi.n_freq();
    map.norm = mode;
    map.values.assign(csi.values().begin(), csi.values().end());
    if (map.values.empty())
        return map;

    const auto &plans = plans_for(map.n_angle, map.n_delay);
    const std::size_t slab = map.n_angle * map.n_delay;
    for (std::size_t u = 0; u < map.n_ue; ++u) {
        auto *buf = reinterpret_cast<fftw_complex *>(map.values.data() + u * slab);
        fftw_execute_dft(plans.port_axis, buf, buf);
        fftw_execute_dft(plans.freq_axis, buf, buf);
    }
    if (mode == NormMode::unitary) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(slab));
        for (auto &v : map.values)
            v *= scale;
    }
    return map;
}

CsiTensor from_angle_delay(const AngleDelayMap &map)
{
    CsiTensor csi(map.n_ue, map.n_angle, map.n_delay);
    auto out = csi.values();
    std::copy(map.values.begin(), map.values.end(), out.begin());
    if (out.empty())
        return csi;

    const auto &plans = plans_for(map.n_angle, map.n_delay);
    const std::size_t slab = map.n_angle * map.n_delay;
    for (std::size_t u = 0; u < map.n_ue; ++u) {
        auto *buf = reinterpret_cast<fftw_complex *>(out.data() + u * slab);
        fftw_execute_dft(plans.freq_axis_inv, buf, buf);
        fftw_execute_dft(plans.port_axis_inv, buf, buf);
    }
    const double scale = map.norm == NormMode::unitary ? 1.0 / std::sqrt(static_cast<double>(slab))
                                                       : 1.0 / static_cast<double>(slab);
    for (auto &v : out)
        v *= scale;
    return csi;
}

CsiTensor augment_noise(const CsiTensor &csi, double sigma, std::mt19937_64 &rng)
{
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("augment_noise: sigma must be finite and non-negative");
    CsiTensor out = csi;
    if (sigma == 0.0)
        return out;
    std::normal_distribution<double> gauss(0.0, sigma / std::sqrt(2.0));
    for (auto &v : out.values()) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v += cplx(re, im);
    }
    return out;
}

CsiTensor interpolate_variant(const CsiTensor &csi, InterpVariant variant)
{
    const std::size_t n = csi.n_freq();
    if (n < 8)
        throw std::invalid_argument("interpolate_variant: need at least 8 frequency bins, got " + std::to_string(n));
    CsiTensor out = csi;
    for (std::size_t u = 0; u < csi.n_ue(); ++u) {
        for (std::size_t b = 0; b < csi.n_bs(); ++b) {
            for (std::size_t k = 1; k < n; k += 2) {
                const cplx lower = csi(u, b, k - 1);
                cplx value;
                if (variant == InterpVariant::B) {
                    value = lower;
                } else if (k + 1 < n) {
                    value = 0.5 * (lower + csi(u, b, k + 1));
                } else {
                    // Last odd bin has no upper neighbour: extend the final segment.
                    value = 1.5 * lower - 0.5 * csi(u, b, k - 3);
                }
                out(u, b, k) = value;
            }
        }
    }
    return out;
}

std::vector<float> encode_model_input(const CsiTensor &csi, std::size_t delay_taps)
{
    const AngleDelayMap map = to_angle_delay(csi, NormMode::unitary);
    if (delay_taps > map.n_delay)
        throw std::invalid_argument("encode_model_input: " + std::to_string(delay_taps) + " delay taps requested, map has " +
                                    std::to_string(map.n_delay));
    const std::size_t taps = delay_taps == 0 ? map.n_delay : delay_taps;
    std::vector<float> out(map.n_ue * map.n_angle * taps);
    double peak = 0.0;
    for (std::size_t u = 0; u < map.n_ue; ++u)
        for (std::size_t a = 0; a < map.n_angle; ++a)
            for (std::size_t d = 0; d < taps; ++d)
                peak = std::max(peak, std::abs(map(u, a, d)));
    if (peak <= 0.0)
        return out;
    for (std::size_t u = 0; u < map.n_ue; ++u)
        for (std::size_t a = 0; a < map.n_angle; ++a)
            for (std::size_t d = 0; d < taps; ++d)
                out[(u * map.n_angle + a) * taps + d] = static_cast<float>(std::abs(map(u, a, d)) / peak);
    return out;
}

} // namespace csipos

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

#include <random>
#include <vector>

namespace csipos {

enum class NormMode { unitary, none };
enum class InterpVariant { A, B };

// CSI in the angle-delay domain, shape [UE antennas x angle bins x delay bins].
struct AngleDelayMap {
    std::size_t n_ue = 0;
    std::size_t n_angle = 0;
    std::size_t n_delay = 0;
    std::vector<cplx> values;
    NormMode norm = NormMode::unitary;

    cplx &operator()(std::size_t u, std::size_t a, std::size_t d) { return values[(u * n_angle + a) * n_delay + d]; }
    const cplx &operator()(std::size_t u, std::size_t a, std::size_t d) const
    {
        return values[(u * n_angle + a) * n_delay + d];
    }
    double frobenius_norm() const;
};

// Per UE antenna: forward DFT over BS ports, inverse DFT over frequency bins.
// Unitary mode scales by 1/sqrt(n_bs * n_freq); `none` leaves both sums unscaled.
AngleDelayMap to_angle_delay(const CsiTensor &csi, NormMode mode = NormMode::unitary);
CsiTensor from_angle_delay(const AngleDelayMap &map);

// Adds circular complex Gaussian noise with E|n|^2 = sigma^2 per element.
CsiTensor augment_noise(const CsiTensor &csi, double sigma, std::mt19937_64 &rng);

// Keeps the even frequency bins and rebuilds the odd ones: A interpolates re/im
// linearly, B repeats the lower neighbour.
CsiTensor interpolate_variant(const CsiTensor &csi, InterpVariant variant);

// |angle-delay map| scaled to a peak of 1, laid out [n_ue][n_angle][n_delay].
// delay_taps > 0 keeps only the first taps of the delay axis.
std::vector<float> encode_model_input(const CsiTensor &csi, std::size_t delay_taps = 0);

} // namespace csipos

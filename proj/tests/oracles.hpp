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

// Independent reference implementations used by the unit tests and the
// acceptance runner. Deliberately naive; none of them call the library code
// they are compared against.

#pragma once

#include "csipos/csi_transform.hpp"
#include "csipos/nn/model.hpp"
#include "csipos/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace csipos::oracle {

// Direct double sum: forward DFT over ports, inverse-sign DFT over frequency.
inline AngleDelayMap angle_delay(const CsiTensor &h, bool unitary)
{
    AngleDelayMap m;
    m.n_ue = h.n_ue();
    m.n_angle = h.n_bs();
    m.n_delay = h.n_freq();
    m.values.assign(h.size(), cplx{});
    const double nb = double(h.n_bs()), nf = double(h.n_freq());
    for (std::size_t u = 0; u < h.n_ue(); ++u)
        for (std::size_t a = 0; a < h.n_bs(); ++a)
            for (std::size_t d = 0; d < h.n_freq(); ++d) {
                cplx acc{};
                for (std::size_t b = 0; b < h.n_bs(); ++b)
                    for (std::size_t k = 0; k < h.n_freq(); ++k)
                        acc += h(u, b, k) * std::polar(1.0, -2.0 * kPi * double(a * b) / nb) *
                               std::polar(1.0, 2.0 * kPi * double(d * k) / nf);
                m(u, a, d) = unitary ? acc / std::sqrt(nb * nf) : acc;
            }
    return m;
}

// Nearest rank by full sort.
inline double percentile(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    std::size_t rank = 1;
    while (double(rank) < p / 100.0 * double(v.size()))
        ++rank;
    return v[rank - 1];
}

inline double euclid(const Vec2 &a, const Vec2 &b)
{
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Rotation about `center` via complex multiplication.
inline Vec2 rotate(const Vec2 &p, const Vec2 &center, double angle_deg)
{
    const cplx z = cplx(p.x - center.x, p.y - center.y) * std::polar(1.0, angle_deg * kPi / 180.0);
    return {center.x + z.real(), center.y + z.imag()};
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Compares backprop against central differences of the batch MSE for every
// parameter of a freshly built double-precision model with randomized weights.
inline GradCheck gradient_check(const nn::ModelConfig &config, std::uint64_t seed, std::size_t n_samples = 3,
                                double h = 1e-4)
{
    nn::Model<double> model(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    for (auto &p : model.params())
        p = g(rng);

    nn::Batch<double> in;
    in.resize(n_samples, config.input);
    for (auto &v : in.data)
        v = g(rng) * 2.0;
    const std::size_t D = model.output_dim();
    std::vector<double> targets(n_samples * D);
    for (auto &t : targets)
        t = g(rng);
    std::vector<std::uint8_t> heads(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        heads[i] = static_cast<std::uint8_t>(i % config.n_heads);

    nn::Workspace<double> ws;
    nn::Batch<double> pred, grad_out;
    auto loss_at = [&]() {
        nn::Batch<double> p, gtmp;
        nn::Workspace<double> w;
        model.forward(in, heads, p, w);
        return nn::mse_loss<double>(p, targets, {}, gtmp);
    };

    model.forward(in, heads, pred, ws);
    nn::mse_loss<double>(pred, targets, {}, grad_out);
    std::vector<double> analytic(model.param_count(), 0.0);
    model.backward(ws, grad_out, analytic);

    GradCheck out;
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = loss_at();
        params[i] = keep - h;
        const double down = loss_at();
        params[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8));
        ++out.checked;
    }
    return out;
}

// Small networks covering every layer kind and activation.
inline std::vector<std::pair<std::string, nn::ModelConfig>> gradient_check_models()
{
    using nn::Activation;
    using nn::LayerKind;
    std::vector<std::pair<std::string, nn::ModelConfig>> out;

    nn::ModelConfig conv;
    conv.input = {2, 6, 6};
    conv.backbone = {{LayerKind::conv, 3, 3, 2, Activation::tanh}, {LayerKind::maxpool, 0, 3, 2, Activation::none},
                     {LayerKind::conv, 2, 1, 2, Activation::none}};
    conv.head = {{LayerKind::dense, 2, 3, 2, Activation::none}};
    out.emplace_back("conv_maxpool", conv);

    nn::ModelConfig relu;
    relu.input = {1, 4, 8};
    relu.backbone = {{LayerKind::conv, 2, 3, 2, Activation::relu}, {LayerKind::avgpool, 0, 3, 2, Activation::none},
                     {LayerKind::dense, 5, 3, 2, Activation::relu}};
    relu.head = {{LayerKind::dense, 2, 3, 2, Activation::none}};
    out.emplace_back("conv_avgpool_relu", relu);

    nn::ModelConfig dense;
    dense.input = {7, 1, 1};
    dense.backbone = {{LayerKind::dense, 6, 3, 2, Activation::tanh}, {LayerKind::dense, 4, 3, 2, Activation::relu}};
    dense.head = {{LayerKind::dense, 3, 3, 2, Activation::tanh}, {LayerKind::dense, 2, 3, 2, Activation::none}};
    dense.n_heads = 3;
    out.emplace_back("dense_multihead", dense);

    nn::ModelConfig small = nn::default_backbone_config({2, 8, 4}, 1, 2, 2, 6);
    out.emplace_back("default_backbone", small);
    return out;
}

} // namespace csipos::oracle

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

#include "csipos/nn/model.hpp"

#include "csipos/common.hpp"
#include "csipos/hash.hpp"

#include <cmath>
#include <sstream>

namespace csipos::nn {

namespace {

json layer_to_json(const LayerSpec &s)
{
    json j;
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
    case LayerKind::conv:
        j["units"] = s.units;
        j["kernel"] = s.kernel;
        j["activation"] = to_string(s.activation);
        break;
    case LayerKind::dense:
        j["units"] = s.units;
        j["activation"] = to_string(s.activation);
        break;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
        j["size"] = s.pool;
        break;
    }
    return j;
}

LayerSpec layer_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    LayerSpec s;
    ConfigReader r(node, path, diag);
    std::string kind = "dense";
    r.read("kind", kind);
    if (kind == "conv")
        s.kind = LayerKind::conv;
    else if (kind == "dense")
        s.kind = LayerKind::dense;
    else if (kind == "maxpool")
        s.kind = LayerKind::maxpool;
    else if (kind == "avgpool")
        s.kind = LayerKind::avgpool;
    else
        r.error("kind", "unknown layer kind '" + kind + "' (conv, dense, maxpool, avgpool)");

    if (s.kind == LayerKind::conv || s.kind == LayerKind::dense) {
        r.read("units", s.units);
        if (s.kind == LayerKind::conv)
            r.read("kernel", s.kernel);
        std::string act = "none";
        r.read("activation", act);
        if (act == "none")
            s.activation = Activation::none;
        else if (act == "relu")
            s.activation = Activation::relu;
        else if (act == "tanh")
            s.activation = Activation::tanh;
        else
            r.error("activation", "unknown activation '" + act + "' (none, relu, tanh)");
    } else {
        r.read("size", s.pool);
    }
    r.finish();
    return s;
}

std::vector<LayerSpec> layers_from_json(ConfigReader &r, const std::string &key)
{
    std::vector<LayerSpec> out;
    const json *node = r.take(key);
    if (!node)
        return out;
    if (!node->is_array()) {
        r.error(key, "expected an array of layer objects");
        return out;
    }
    for (std::size_t i = 0; i < node->size(); ++i)
        out.push_back(layer_from_json((*node)[i], r.key_path(key) + "[" + std::to_string(i) + "]", r.diagnostics()));
    return out;
}

} // namespace

json model_config_to_json(const ModelConfig &c)
{
    json j;
    j["input"] = {c.input.c, c.input.h, c.input.w};
    j["backbone"] = json::array();
    for (const auto &l : c.backbone)
        j["backbone"].push_back(layer_to_json(l));
    j["head"] = json::array();
    for (const auto &l : c.head)
        j["head"].push_back(layer_to_json(l));
    j["n_heads"] = c.n_heads;
    j["output_center"] = c.output_center;
    j["output_scale"] = c.output_scale;
    j["init_seed"] = c.init_seed;
    return j;
}

ModelConfig model_config_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    ModelConfig c;
    ConfigReader r(node, path, diag);
    std::array<std::size_t, 3> in{c.input.c, c.input.h, c.input.w};
    r.read("input", in);
    c.input = {in[0], in[1], in[2]};
    c.backbone = layers_from_json(r, "backbone");
    c.head = layers_from_json(r, "head");
    r.read("n_heads", c.n_heads);
    r.read("output_center", c.output_center);
    r.read("output_scale", c.output_scale);
    r.read("init_seed", c.init_seed);
    r.finish();
    return c;
}

Diagnostics check_model_config(const ModelConfig &c)
{
    Diagnostics diag;
    if (c.input.size() == 0)
        diag.push_back("input: shape must be non-empty");
    if (c.head.empty())
        diag.push_back("head: at least one layer is required");
    else if (c.head.back().kind != LayerKind::dense)
        diag.push_back("head: last layer must be dense");
    if (c.n_heads < 1 || c.n_heads > 255)
        diag.push_back("n_heads: must be in [1, 255]");
    if (!(c.output_scale > 0.0) || !std::isfinite(c.output_scale))
        diag.push_back("output_scale: must be positive");
    if (!c.output_center.empty() && c.output_center.size() != c.output_dim())
        diag.push_back("output_center: must be empty or hold one value per output");
    if (!diag.empty())
        return diag;
    try {
        Shape s = c.input;
        for (std::size_t i = 0; i < c.backbone.size(); ++i)
            s = make_layer<float>(c.backbone[i], s, "backbone[" + std::to_string(i) + "]")->output_shape();
        for (std::size_t i = 0; i < c.head.size(); ++i)
            s = make_layer<float>(c.head[i], s, "head[" + std::to_string(i) + "]")->output_shape();
    } catch (const ConfigError &e) {
        diag.push_back(e.what());
    }
    return diag;
}

std::string config_hash(const ModelConfig &config)
{
    json j = model_config_to_json(config);
    j.erase("init_seed");
    return sha256_hex(j.dump());
}

ModelConfig default_backbone_config(const Shape &input, std::size_t n_heads, std::size_t width, std::size_t depth,
                                    std::size_t hidden)
{
    ModelConfig c;
    c.input = input;
    Shape s = input;
    for (std::size_t d = 0; d < depth; ++d) {
        const std::size_t ch = d == 0 ? width : 2 * width;
        c.backbone.push_back({LayerKind::conv, ch, 3, 2, Activation::relu});
        s = {ch, s.h, s.w};
        if (s.h >= 2 && s.w >= 2) {
            c.backbone.push_back({LayerKind::maxpool, 0, 3, 2, Activation::none});
            s = {s.c, s.h / 2, s.w / 2};
        }
    }
    c.backbone.push_back({LayerKind::dense, hidden, 3, 2, Activation::relu});
    c.head.push_back({LayerKind::dense, 2, 3, 2, Activation::none});
    c.n_heads = n_heads;
    return c;
}

template <typename T> Model<T>::Model(const ModelConfig &config) : config_(config)
{
    throw_if_any(check_model_config(config_), "invalid model configuration");
    build();
    for (std::size_t i = 0; i < backbone_.size(); ++i) {
        auto rng = make_rng(config_.init_seed, RngStream::init, i);
        backbone_[i]->init_params(
            std::span<T>(params_).subspan(backbone_offset_[i], backbone_[i]->param_count()), rng);
    }
    for (std::size_t h = 0; h < heads_.size(); ++h)
        for (std::size_t j = 0; j < heads_[h].size(); ++j) {
            auto rng = make_rng(config_.init_seed, RngStream::init, 1000 * (h + 1) + j);
            heads_[h][j]->init_params(
                std::span<T>(params_).subspan(head_offset_[h][j], heads_[h][j]->param_count()), rng);
        }
}

template <typename T> Model<T>::Model(const Model &other) : config_(other.config_)
{
    build();
    params_ = other.params_;
}

template <typename T> Model<T> &Model<T>::operator=(const Model &other)
{
    if (this != &other) {
        Model copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T> void Model<T>::build()
{
    backbone_.clear();
    heads_.clear();
    blobs_.clear();
    std::size_t offset = 0;
    auto add_blobs = [&](const Layer<T> &layer, const std::string &prefix) {
        for (const auto &[suffix, count] : layer.param_layout()) {
            blobs_.push_back({prefix + "." + suffix, offset, count});
            offset += count;
        }
    };

    Shape s = config_.input;
    for (std::size_t i = 0; i < config_.backbone.size(); ++i) {
        const std::string name = "backbone." + std::to_string(i);
        backbone_.push_back(make_layer<T>(config_.backbone[i], s, name));
        backbone_offset_.push_back(offset);
        add_blobs(*backbone_.back(), name);
        s = backbone_.back()->output_shape();
    }
    const Shape feat = s;
    heads_.resize(config_.n_heads);
    head_offset_.assign(config_.n_heads, {});
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
        s = feat;
        for (std::size_t j = 0; j < config_.head.size(); ++j) {
            const std::string name = "head" + std::to_string(h) + "." + std::to_string(j);
            heads_[h].push_back(make_layer<T>(config_.head[j], s, name));
            head_offset_[h].push_back(offset);
            add_blobs(*heads_[h].back(), name);
            s = heads_[h].back()->output_shape();
        }
    }
    params_.assign(offset, T(0));
}

template <typename T> Shape Model<T>::feature_shape() const
{
    return backbone_.empty() ? config_.input : backbone_.back()->output_shape();
}

template <typename T> void Model<T>::run_backbone(const Batch<T> &in, Workspace<T> &ws) const
{
    if (!(in.shape == config_.input))
        throw NumericError("input shape mismatch at " +
                           std::string(backbone_.empty() ? "head layer 0" : "layer backbone.0") + ": expected " +
                           to_string(config_.input) + ", got " + to_string(in.shape));
    ws.input = &in;
    ws.acts.resize(backbone_.size());
    ws.scratch.resize(backbone_.size());
    const Batch<T> *cur = &in;
    for (std::size_t i = 0; i < backbone_.size(); ++i) {
        const auto p = std::span<const T>(params_).subspan(backbone_offset_[i], backbone_[i]->param_count());
        backbone_[i]->forward(p, *cur, ws.acts[i], ws.scratch[i]);
        cur = &ws.acts[i];
    }
}

template <typename T> void Model<T>::features(const Batch<T> &in, Batch<T> &out, Workspace<T> &ws) const
{
    run_backbone(in, ws);
    out = backbone_.empty() ? in : ws.acts.back();
}

template <typename T>
void Model<T>::forward(const Batch<T> &in, std::span<const std::uint8_t> heads, Batch<T> &out, Workspace<T> &ws) const
{
    if (!heads.empty() && heads.size() != in.n)
        throw NumericError("head routing has " + std::to_string(heads.size()) + " entries for a batch of " +
                           std::to_string(in.n));
    run_backbone(in, ws);
    const Batch<T> &feat = backbone_.empty() ? in : ws.acts.back();
    const std::size_t F = feat.shape.size();

    ws.heads.resize(heads_.size());
    for (auto &hs : ws.heads)
        hs.rows.clear();
    for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t h = heads.empty() ? 0 : heads[i];
        if (h >= heads_.size())
            throw NumericError("sample routed to head " + std::to_string(h) + " but the model has " +
                               std::to_string(heads_.size()) + " heads");
        ws.heads[h].rows.push_back(i);
    }

    out.resize(in.n, {output_dim(), 1, 1});
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        auto &hs = ws.heads[h];
        if (hs.rows.empty())
            continue;
        hs.input.resize(hs.rows.size(), feat.shape);
        for (std::size_t r = 0; r < hs.rows.size(); ++r)
            std::copy_n(feat.data.begin() + static_cast<std::ptrdiff_t>(hs.rows[r] * F), F,
                        hs.input.data.begin() + static_cast<std::ptrdiff_t>(r * F));
        hs.acts.resize(heads_[h].size());
        hs.scratch.resize(heads_[h].size());
        const Batch<T> *cur = &hs.input;
        for (std::size_t j = 0; j < heads_[h].size(); ++j) {
            const auto p = std::span<const T>(params_).subspan(head_offset_[h][j], heads_[h][j]->param_count());
            heads_[h][j]->forward(p, *cur, hs.acts[j], hs.scratch[j]);
            cur = &hs.acts[j];
        }
        for (std::size_t r = 0; r < hs.rows.size(); ++r)
            for (std::size_t d = 0; d < output_dim(); ++d)
                out.data[hs.rows[r] * output_dim() + d] = cur->data[r * output_dim() + d];
    }
}

template <typename T> void Model<T>::backward(Workspace<T> &ws, Batch<T> &grad_out, std::span<T> grad) const
{
    if (grad.size() != params_.size())
        throw NumericError("gradient buffer size mismatch");
    const Batch<T> &in = *ws.input;
    const Batch<T> &feat = backbone_.empty() ? in : ws.acts.back();
    const std::size_t F = feat.shape.size();
    const std::size_t D = output_dim();
    ws.feature_grad.resize(in.n, feat.shape);
    ws.feature_grad.zero();

    for (std::size_t h = 0; h < heads_.size(); ++h) {
        auto &hs = ws.heads[h];
        if (hs.rows.empty())
            continue;
        Batch<T> &g = ws.grad_a;
        g.resize(hs.rows.size(), {D, 1, 1});
        for (std::size_t r = 0; r < hs.rows.size(); ++r)
            for (std::size_t d = 0; d < D; ++d)
                g.data[r * D + d] = grad_out.data[hs.rows[r] * D + d];
        for (std::size_t j = heads_[h].size(); j-- > 0;) {
            const Batch<T> &layer_in = j == 0 ? hs.input : hs.acts[j - 1];
            const auto p = std::span<const T>(params_).subspan(head_offset_[h][j], heads_[h][j]->param_count());
            auto gp = grad.subspan(head_offset_[h][j], heads_[h][j]->param_count());
            heads_[h][j]->backward(p, layer_in, hs.acts[j], ws.grad_a, &ws.grad_b, gp, hs.scratch[j]);
            std::swap(ws.grad_a, ws.grad_b);
        }
        for (std::size_t r = 0; r < hs.rows.size(); ++r)
            for (std::size_t f = 0; f < F; ++f)
                ws.feature_grad.data[hs.rows[r] * F + f] += ws.grad_a.data[r * F + f];
    }

    std::swap(ws.grad_a, ws.feature_grad);
    for (std::size_t i = backbone_.size(); i-- > 0;) {
        const Batch<T> &layer_in = i == 0 ? in : ws.acts[i - 1];
        const auto p = std::span<const T>(params_).subspan(backbone_offset_[i], backbone_[i]->param_count());
        auto gp = grad.subspan(backbone_offset_[i], backbone_[i]->param_count());
        backbone_[i]->backward(p, layer_in, ws.acts[i], ws.grad_a, i == 0 ? nullptr : &ws.grad_b, gp, ws.scratch[i]);
        if (i > 0)
            std::swap(ws.grad_a, ws.grad_b);
    }
}

template <typename T> double Model<T>::to_output(double raw, std::size_t dim) const
{
    const double center = config_.output_center.empty() ? 0.0 : config_.output_center[dim];
    return center + config_.output_scale * raw;
}

template <typename T> double Model<T>::to_raw(double value, std::size_t dim) const
{
    const double center = config_.output_center.empty() ? 0.0 : config_.output_center[dim];
    return (value - center) / config_.output_scale;
}

template <typename T> std::string Model<T>::describe_param_norms() const
{
    std::ostringstream out;
    for (const auto &b : blobs_) {
        double acc = 0.0;
        for (std::size_t i = 0; i < b.count; ++i)
            acc += static_cast<double>(params_[b.offset + i]) * static_cast<double>(params_[b.offset + i]);
        out << "  " << b.name << ": " << std::sqrt(acc) << "\n";
    }
    return out.str();
}

template class Model<float>;
template class Model<double>;

} // namespace csipos::nn

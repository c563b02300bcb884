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

#include "csipos/nn/checkpoint.hpp"

#include "csipos/common.hpp"
#include "csipos/hash.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace csipos::nn {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'N', 'N'};
constexpr char kEndMarker[4] = {'N', 'N', 'P', 'C'};

template <typename T> void put(std::ostream &out, T value)
{
    out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

void read_exact(std::istream &in, char *dst, std::size_t n, const std::string &what)
{
    in.read(dst, static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw FormatError("checkpoint truncated while reading " + what);
}

template <typename T> T get(std::istream &in, const std::string &what)
{
    T value{};
    read_exact(in, reinterpret_cast<char *>(&value), sizeof(T), what);
    return value;
}

void put_blob(std::ostream &out, const std::string &name, std::span<const float> values)
{
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, values.size());
    out.write(reinterpret_cast<const char *>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::string optimizer_kind_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

} // namespace

Checkpoint make_checkpoint(const Model<float> &model, const Optimizer<float> &opt, std::uint64_t step,
                           std::string stage, std::string dataset_hash)
{
    Checkpoint c;
    c.config = model.config();
    c.weights.assign(model.params().begin(), model.params().end());
    c.optimizer = opt.config();
    c.optimizer_t = opt.state().t;
    c.optimizer_m.assign(opt.state().m.begin(), opt.state().m.end());
    c.optimizer_v.assign(opt.state().v.begin(), opt.state().v.end());
    c.step = step;
    c.stage = std::move(stage);
    c.dataset_hash = std::move(dataset_hash);
    return c;
}

Model<float> restore_model(const Checkpoint &ckpt)
{
    Model<float> model(ckpt.config);
    if (ckpt.weights.size() != model.param_count())
        throw FormatError("checkpoint holds " + std::to_string(ckpt.weights.size()) + " weights, model expects " +
                          std::to_string(model.param_count()));
    std::copy(ckpt.weights.begin(), ckpt.weights.end(), model.params().begin());
    return model;
}

Optimizer<float> restore_optimizer(const Checkpoint &ckpt, double lr_scale)
{
    OptimizerConfig cfg = ckpt.optimizer;
    cfg.lr *= lr_scale;
    OptimizerState state;
    state.t = ckpt.optimizer_t;
    state.m.assign(ckpt.optimizer_m.begin(), ckpt.optimizer_m.end());
    state.v.assign(ckpt.optimizer_v.begin(), ckpt.optimizer_v.end());
    return Optimizer<float>(cfg, std::move(state));
}

void save_checkpoint(const Checkpoint &ckpt, std::ostream &out)
{
    const Model<float> layout(ckpt.config);
    if (ckpt.weights.size() != layout.param_count())
        throw FormatError("checkpoint weight count does not match its model config");

    out.write(kMagic, 4);
    put<std::uint32_t>(out, Checkpoint::kVersion);
    const std::string hash = config_hash(ckpt.config);
    out.write(hash.data(), static_cast<std::streamsize>(hash.size()));
    put<std::uint64_t>(out, ckpt.step);

    json meta;
    meta["model"] = model_config_to_json(ckpt.config);
    meta["optimizer"] = {{"kind", optimizer_kind_name(ckpt.optimizer.kind)},
                         {"lr", ckpt.optimizer.lr},
                         {"momentum", ckpt.optimizer.momentum},
                         {"beta1", ckpt.optimizer.beta1},
                         {"beta2", ckpt.optimizer.beta2},
                         {"eps", ckpt.optimizer.eps},
                         {"t", ckpt.optimizer_t}};
    meta["stage"] = ckpt.stage;
    meta["dataset_hash"] = ckpt.dataset_hash;
    meta["extra"] = ckpt.extra;
    const std::string blob = meta.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    const auto &blobs = layout.blobs();
    const std::uint32_t n_blobs = static_cast<std::uint32_t>(blobs.size()) + (ckpt.optimizer_m.empty() ? 0 : 1) +
                                  (ckpt.optimizer_v.empty() ? 0 : 1);
    put<std::uint32_t>(out, n_blobs);
    for (const auto &b : blobs)
        put_blob(out, b.name, std::span<const float>(ckpt.weights).subspan(b.offset, b.count));
    if (!ckpt.optimizer_m.empty())
        put_blob(out, "optimizer.m", ckpt.optimizer_m);
    if (!ckpt.optimizer_v.empty())
        put_blob(out, "optimizer.v", ckpt.optimizer_v);
    out.write(kEndMarker, 4);
    if (!out)
        throw FormatError("failed writing checkpoint");
}

void save_checkpoint(const Checkpoint &ckpt, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(std::istream &in)
{
    char magic[4];
    read_exact(in, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a checkpoint file (bad magic)");
    const auto version = get<std::uint32_t>(in, "version");
    if (version != Checkpoint::kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    std::string hash(64, '\0');
    read_exact(in, hash.data(), hash.size(), "config hash");

    Checkpoint c;
    c.step = get<std::uint64_t>(in, "step count");
    const auto meta_len = get<std::uint32_t>(in, "metadata length");
    std::string meta_text(meta_len, '\0');
    read_exact(in, meta_text.data(), meta_len, "metadata");
    json meta;
    try {
        meta = json::parse(meta_text);
    } catch (const json::parse_error &e) {
        throw FormatError(std::string("checkpoint metadata is corrupted: ") + e.what());
    }
    Diagnostics diag;
    c.config = model_config_from_json(meta.value("model", json::object()), "model", diag);
    if (!diag.empty())
        throw FormatError("checkpoint model config is invalid: " + diag.front());
    if (config_hash(c.config) != hash)
        throw FormatError("checkpoint config hash does not match its embedded model config");
    const json opt = meta.value("optimizer", json::object());
    c.optimizer.kind = opt.value("kind", "adam") == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    c.optimizer.lr = opt.value("lr", c.optimizer.lr);
    c.optimizer.momentum = opt.value("momentum", c.optimizer.momentum);
    c.optimizer.beta1 = opt.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = opt.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = opt.value("eps", c.optimizer.eps);
    c.optimizer_t = opt.value("t", std::uint64_t{0});
    c.stage = meta.value("stage", "");
    c.dataset_hash = meta.value("dataset_hash", "");
    c.extra = meta.value("extra", json::object());

    const Model<float> layout(c.config);
    std::map<std::string, std::vector<float>> blobs;
    const auto n_blobs = get<std::uint32_t>(in, "blob count");
    for (std::uint32_t i = 0; i < n_blobs; ++i) {
        const auto name_len = get<std::uint16_t>(in, "blob name length");
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name_len, "blob name");
        const auto count = get<std::uint64_t>(in, "blob size");
        if (count > (std::uint64_t{1} << 32))
            throw FormatError("checkpoint blob '" + name + "' has an implausible size");
        std::vector<float> values(count);
        read_exact(in, reinterpret_cast<char *>(values.data()), count * sizeof(float), "blob '" + name + "'");
        blobs.emplace(std::move(name), std::move(values));
    }
    char end[4];
    read_exact(in, end, 4, "end marker");
    if (std::memcmp(end, kEndMarker, 4) != 0)
        throw FormatError("checkpoint truncated or corrupted: bad end marker");
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("checkpoint corrupted: trailing bytes after end marker");

    c.weights.assign(layout.param_count(), 0.0f);
    for (const auto &b : layout.blobs()) {
        auto it = blobs.find(b.name);
        if (it == blobs.end())
            throw FormatError("checkpoint is missing weight blob '" + b.name + "'");
        if (it->second.size() != b.count)
            throw FormatError("checkpoint blob '" + b.name + "' has the wrong size");
        std::copy(it->second.begin(), it->second.end(), c.weights.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    if (auto it = blobs.find("optimizer.m"); it != blobs.end())
        c.optimizer_m = it->second;
    if (auto it = blobs.find("optimizer.v"); it != blobs.end())
        c.optimizer_v = it->second;
    return c;
}

Checkpoint load_checkpoint(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in);
}

Checkpoint load_checkpoint(const std::string &path, const ModelConfig &expected)
{
    Checkpoint c = load_checkpoint(path);
    if (config_hash(c.config) != config_hash(expected))
        throw FormatError("checkpoint '" + path + "' config hash " + config_hash(c.config) +
                          " does not match the requested model config " + config_hash(expected));
    return c;
}

std::string checkpoint_hash(const Checkpoint &ckpt)
{
    std::ostringstream out(std::ios::binary);
    save_checkpoint(ckpt, out);
    return sha256_hex(out.str());
}

} // namespace csipos::nn

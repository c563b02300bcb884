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

#include "csipos/positioning_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csipos {

InputFn make_input_fn(std::vector<std::shared_ptr<const CsiTensor>> csi, const InputOptions &opts)
{
    if (!(opts.noise_rel >= 0.0) || !std::isfinite(opts.noise_rel))
        throw ConfigError("input noise level must be finite and non-negative");
    for (const auto &c : csi)
        if (!c)
            throw ConfigError("input list contains a sample without CSI");

    if (opts.noise_rel == 0.0) {
        auto cache = std::make_shared<std::vector<std::vector<float>>>(csi.size());
        parallel_for(csi.size(), [&](std::size_t i) {
            (*cache)[i] = opts.variant ? encode_model_input(interpolate_variant(*csi[i], *opts.variant), opts.delay_taps)
                                       : encode_model_input(*csi[i], opts.delay_taps);
        });
        return [cache](std::size_t i, std::size_t, std::span<float> dst) {
            const auto &v = cache->at(i);
            if (v.size() != dst.size())
                throw NumericError("model input has " + std::to_string(v.size()) + " values, expected " +
                                   std::to_string(dst.size()));
            std::copy(v.begin(), v.end(), dst.begin());
        };
    }

    auto shared = std::make_shared<std::vector<std::shared_ptr<const CsiTensor>>>(std::move(csi));
    return [shared, opts](std::size_t i, std::size_t epoch, std::span<float> dst) {
        const CsiTensor &src = *shared->at(i);
        auto rng = make_rng(opts.seed, RngStream::augment, (static_cast<std::uint64_t>(epoch) << 32) ^ i);
        const CsiTensor base = opts.variant ? interpolate_variant(src, *opts.variant) : src;
        const double sigma = opts.noise_rel * std::sqrt(base.mean_power());
        const auto v = encode_model_input(augment_noise(base, sigma, rng), opts.delay_taps);
        if (v.size() != dst.size())
            throw NumericError("model input has " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(dst.size()));
        std::copy(v.begin(), v.end(), dst.begin());
    };
}

nn::Shape input_shape(const SceneConfig &config, std::size_t delay_taps)
{
    if (delay_taps > config.n_freq_bins)
        throw ConfigError("delay_taps (" + std::to_string(delay_taps) + ") exceeds n_freq_bins (" +
                          std::to_string(config.n_freq_bins) + ")");
    return {config.n_ue_ant, config.n_bs_ant(), delay_taps == 0 ? config.n_freq_bins : delay_taps};
}

InputOptions model_inputs(const nn::ModelConfig &model, double noise_rel, std::uint64_t seed,
                          std::optional<InterpVariant> variant)
{
    return {noise_rel, seed, variant, model.input.w};
}

void set_output_normalization(nn::ModelConfig &model, const SceneConfig &scene)
{
    model.output_center = {scene.bs_position.x, scene.bs_position.y};
    model.output_scale = 0.5 * scene.rx_max_distance_m;
}

nn::TrainHistory train_positions(nn::Model<float> &model, nn::Optimizer<float> &opt, const Dataset &dataset,
                                 const PositionTargets &targets, const nn::TrainOptions &opts,
                                 std::uint64_t &step_counter)
{
    if (targets.labels.size() != targets.indices.size())
        throw ConfigError("training targets: index and label counts differ");
    if (!targets.weights.empty() && targets.weights.size() != targets.indices.size())
        throw ConfigError("training targets: weight count differs from index count");
    nn::TrainData<float> data;
    data.size = targets.indices.size();
    std::vector<std::shared_ptr<const CsiTensor>> csi;
    csi.reserve(data.size);
    for (std::size_t j = 0; j < data.size; ++j) {
        csi.push_back(dataset.samples.at(targets.indices[j]).csi);
        data.targets.push_back(targets.labels[j].x);
        data.targets.push_back(targets.labels[j].y);
    }
    data.weights = targets.weights;
    data.input = make_input_fn(std::move(csi), model_inputs(model.config(), opts.noise_rel, opts.seed));
    return nn::train(model, opt, data, opts, step_counter);
}

std::vector<Vec2> predict_positions(const nn::Model<float> &model, const Dataset &dataset,
                                    std::span<const std::size_t> indices, InputOptions inputs)
{
    inputs.delay_taps = model.config().input.w;
    std::vector<std::shared_ptr<const CsiTensor>> csi;
    csi.reserve(indices.size());
    for (auto i : indices)
        csi.push_back(dataset.samples.at(i).csi);
    const auto in = make_input_fn(std::move(csi), inputs);
    const auto raw = nn::predict<float>(model, indices.size(), [&](std::size_t i, std::span<float> dst) { in(i, 0, dst); });
    std::vector<Vec2> out(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j)
        out[j] = {raw[2 * j], raw[2 * j + 1]};
    return out;
}

Vec2 rotate_coordinates(const Vec2 &p, const SectorRotation &rotation)
{
    if (rotation.angle_deg == 0.0)
        return p;
    const double a = rotation.angle_deg * kPi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double dx = p.x - rotation.center.x, dy = p.y - rotation.center.y;
    return {rotation.center.x + c * dx - s * dy, rotation.center.y + s * dx + c * dy};
}

SectorRotation sector_rotation(const SceneConfig &config, std::uint8_t from, std::uint8_t to)
{
    if (from >= kSectorCount || to >= kSectorCount)
        throw ConfigError("sector rotation: unknown sector " + std::to_string(std::max(from, to)));
    double angle = config.sector_boresights_deg[to] - config.sector_boresights_deg[from];
    angle = std::remainder(angle, 360.0);
    if (angle == -180.0)
        angle = 180.0;
    return {config.bs_ground(), angle};
}

Dataset build_virtual_sector_dataset(const Dataset &dataset, std::uint8_t target)
{
    if (target >= kSectorCount)
        throw ConfigError("virtual sector dataset: unknown target sector " + std::to_string(target));
    Dataset out;
    out.config = dataset.config;
    out.seed = dataset.seed;
    out.format_version = dataset.format_version;
    out.samples.reserve(dataset.samples.size());
    const bool has_truth = dataset.truth.size() == dataset.samples.size();
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        Sample s = dataset.samples[i];
        if (s.sector >= kSectorCount)
            throw ConfigError("virtual sector dataset: sample " + std::to_string(s.id) + " has unknown sector");
        const SectorRotation rot = sector_rotation(dataset.config, s.sector, target);
        if (s.position)
            s.position = rotate_coordinates(*s.position, rot);
        if (has_truth)
            out.truth.push_back(rotate_coordinates(dataset.truth[i], rot));
        s.origin_sector = s.sector;
        s.sector = target;
        out.samples.push_back(std::move(s));
    }
    return out;
}

std::string routing_policy_name(RoutingPolicy p) { return p == RoutingPolicy::known ? "known" : "nearest_centroid"; }

RoutingPolicy parse_routing_policy(const std::string &name)
{
    if (name == "known")
        return RoutingPolicy::known;
    if (name == "nearest_centroid")
        return RoutingPolicy::nearest_centroid;
    throw ConfigError("unknown routing policy '" + name + "' (expected known or nearest_centroid)");
}

std::vector<double> sector_signature(const CsiTensor &csi)
{
    const AngleDelayMap map = to_angle_delay(csi);
    std::vector<double> sig(map.n_angle + map.n_delay, 0.0);
    double total = 0.0;
    for (std::size_t u = 0; u < map.n_ue; ++u)
        for (std::size_t a = 0; a < map.n_angle; ++a)
            for (std::size_t d = 0; d < map.n_delay; ++d) {
                const double p = std::norm(map(u, a, d));
                sig[a] += p;
                sig[map.n_angle + d] += p;
                total += p;
            }
    if (total > 0.0)
        for (auto &v : sig)
            v /= total;
    return sig;
}

SectorCentroids compute_sector_centroids(const Dataset &dataset)
{
    SectorCentroids c;
    std::array<std::size_t, kSectorCount> count{};
    std::vector<std::vector<double>> sigs(dataset.samples.size());
    parallel_for(sigs.size(), [&](std::size_t i) { sigs[i] = sector_signature(*dataset.samples[i].csi); });
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        const auto s = dataset.samples[i].origin_sector;
        if (s >= kSectorCount)
            continue;
        if (c[s].empty())
            c[s].assign(sigs[i].size(), 0.0);
        for (std::size_t k = 0; k < sigs[i].size(); ++k)
            c[s][k] += sigs[i][k];
        ++count[s];
    }
    for (std::size_t s = 0; s < kSectorCount; ++s) {
        if (count[s] == 0)
            throw ConfigError("sector centroids: sector " + std::to_string(s) + " has no samples");
        for (auto &v : c[s])
            v /= static_cast<double>(count[s]);
    }
    return c;
}

nn::ModelConfig default_decoupled_config(const SceneConfig &scene, std::size_t delay_taps, std::uint64_t init_seed)
{
    nn::ModelConfig c = nn::default_backbone_config(input_shape(scene, delay_taps), kSectorCount);
    set_output_normalization(c, scene);
    c.init_seed = init_seed;
    return c;
}

namespace {

void check_decoupled(const nn::ModelConfig &config)
{
    if (config.n_heads != kSectorCount)
        throw ConfigError("decoupled model needs exactly " + std::to_string(kSectorCount) + " heads, got " +
                          std::to_string(config.n_heads));
    if (config.output_dim() != 2)
        throw ConfigError("decoupled model heads must emit 2D coordinates");
}

} // namespace

DecoupledHeadModel::DecoupledHeadModel(nn::ModelConfig config, SceneConfig scene)
    : model_((check_decoupled(config), config)), scene_(std::move(scene))
{
}

DecoupledHeadModel::DecoupledHeadModel(const nn::Checkpoint &ckpt, SceneConfig scene)
    : model_((check_decoupled(ckpt.config), nn::restore_model(ckpt))), optimizer_(nn::restore_optimizer(ckpt)),
      scene_(std::move(scene)), steps_(ckpt.step)
{
    if (ckpt.extra.contains("sector_centroids")) {
        SectorCentroids c;
        const auto &node = ckpt.extra["sector_centroids"];
        if (!node.is_array() || node.size() != kSectorCount)
            throw FormatError("checkpoint sector centroids are malformed");
        for (std::size_t s = 0; s < kSectorCount; ++s)
            c[s] = node[s].get<std::vector<double>>();
        centroids_ = std::move(c);
    }
}

nn::TrainHistory DecoupledHeadModel::train(const Dataset &dataset, std::span<const PseudoLabel> pseudo,
                                           const DecoupledTrainOptions &opts)
{
    std::vector<std::size_t> src;
    std::vector<Vec2> labels;
    std::vector<double> label_weight;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (dataset.samples[i].position) {
            src.push_back(i);
            labels.push_back(*dataset.samples[i].position);
            label_weight.push_back(1.0);
        }
    for (const auto &p : pseudo) {
        if (p.sample_index >= dataset.samples.size())
            throw ConfigError("pseudo-label refers to sample index " + std::to_string(p.sample_index) +
                              " outside the dataset");
        src.push_back(p.sample_index);
        labels.push_back(p.label);
        label_weight.push_back(opts.pseudo_weight);
    }
    if (src.empty())
        throw ConfigError("decoupled training needs at least one labeled sample");
    centroids_ = compute_sector_centroids(dataset);

    // Virtual sector datasets V_0..V_2 laid out back to back.
    nn::TrainData<float> data;
    data.size = src.size() * kSectorCount;
    std::vector<std::shared_ptr<const CsiTensor>> csi;
    csi.reserve(data.size);
    for (std::uint8_t target = 0; target < kSectorCount; ++target)
        for (std::size_t j = 0; j < src.size(); ++j) {
            const Sample &s = dataset.samples[src[j]];
            const Vec2 p = rotate_coordinates(labels[j], sector_rotation(scene_, s.origin_sector, target));
            csi.push_back(s.csi);
            data.targets.push_back(p.x);
            data.targets.push_back(p.y);
            data.heads.push_back(target);
            data.weights.push_back(label_weight[j]);
        }
    data.input = make_input_fn(std::move(csi), model_inputs(model_.config(), opts.noise_rel, opts.train.seed));

    if (optimizer_.state().t == 0)
        optimizer_ = nn::Optimizer<float>(opts.train.optimizer);
    else
        optimizer_.config().lr = opts.train.optimizer.lr;
    return nn::train(model_, optimizer_, data, opts.train, steps_);
}

std::uint8_t DecoupledHeadModel::route(const Sample &sample, RoutingPolicy policy) const
{
    if (policy == RoutingPolicy::known) {
        if (sample.sector >= kSectorCount)
            throw ConfigError("sample " + std::to_string(sample.id) +
                              " has no sector tag and the routing policy is 'known'");
        return sample.sector;
    }
    if (!centroids_)
        throw ConfigError("routing policy 'nearest_centroid' needs sector centroids");
    const auto sig = sector_signature(*sample.csi);
    std::uint8_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint8_t s = 0; s < kSectorCount; ++s) {
        const auto &c = (*centroids_)[s];
        if (c.size() != sig.size())
            throw ConfigError("sector centroid size does not match the CSI dimensions");
        double d = 0.0;
        for (std::size_t k = 0; k < sig.size(); ++k)
            d += (sig[k] - c[k]) * (sig[k] - c[k]);
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    return best;
}

std::vector<Vec2> DecoupledHeadModel::predict(const Dataset &dataset, std::span<const std::size_t> indices,
                                              RoutingPolicy policy) const
{
    std::vector<std::uint8_t> heads(indices.size());
    std::vector<std::shared_ptr<const CsiTensor>> csi;
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Sample &s = dataset.samples.at(indices[j]);
        heads[j] = route(s, policy);
        csi.push_back(s.csi);
    }
    const auto in = make_input_fn(std::move(csi), model_inputs(model_.config()));
    const auto raw = nn::predict<float>(
        model_, indices.size(), [&](std::size_t i, std::span<float> dst) { in(i, 0, dst); }, heads);
    std::vector<Vec2> out(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Sample &s = dataset.samples[indices[j]];
        Vec2 p{raw[2 * j], raw[2 * j + 1]};
        // The head works in its own sector frame; map back to the measuring sector.
        if (policy == RoutingPolicy::known && s.origin_sector < kSectorCount && s.origin_sector != heads[j])
            p = rotate_coordinates(p, sector_rotation(scene_, heads[j], s.origin_sector));
        out[j] = p;
    }
    return out;
}

std::vector<Vec2> DecoupledHeadModel::predict_head(const Dataset &dataset, std::span<const std::size_t> indices,
                                                   std::uint8_t head) const
{
    if (head >= kSectorCount)
        throw ConfigError("unknown head " + std::to_string(head));
    std::vector<std::shared_ptr<const CsiTensor>> csi;
    for (auto i : indices)
        csi.push_back(dataset.samples.at(i).csi);
    const std::vector<std::uint8_t> heads(indices.size(), head);
    const auto in = make_input_fn(std::move(csi), model_inputs(model_.config()));
    const auto raw = nn::predict<float>(
        model_, indices.size(), [&](std::size_t i, std::span<float> dst) { in(i, 0, dst); }, heads);
    std::vector<Vec2> out(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j)
        out[j] = {raw[2 * j], raw[2 * j + 1]};
    return out;
}

nn::Checkpoint DecoupledHeadModel::checkpoint(std::string stage, std::string dataset_hash) const
{
    nn::Checkpoint c = nn::make_checkpoint(model_, optimizer_, steps_, std::move(stage), std::move(dataset_hash));
    if (centroids_) {
        json node = json::array();
        for (const auto &v : *centroids_)
            node.push_back(v);
        c.extra["sector_centroids"] = node;
    }
    return c;
}

} // namespace csipos

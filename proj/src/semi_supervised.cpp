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

#include "csipos/semi_supervised.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace csipos {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag)
{
    auto rng = make_rng(seed, RngStream::augment, tag);
    return rng();
}

const char *target_mode_name(PseudoTargetMode m)
{
    switch (m) {
    case PseudoTargetMode::self_prediction:
        return "self_prediction";
    case PseudoTargetMode::self_prediction_mixed:
        return "self_prediction_mixed";
    case PseudoTargetMode::labeled_interpolated:
        return "labeled_interpolated";
    }
    return "?";
}

void check_r(double r)
{
    if (!(r > 0.0))
        throw ConfigError("pseudo-label distance threshold r must be > 0");
}

nn::Checkpoint finetune_copy(const nn::Checkpoint &start, const Dataset &dataset, const PositionTargets &targets,
                             nn::TrainOptions opts, std::optional<InterpVariant> variant, std::string stage)
{
    nn::Model<float> model = nn::restore_model(start);
    nn::Optimizer<float> opt(opts.optimizer);
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
    data.input = make_input_fn(std::move(csi), model_inputs(model.config(), opts.noise_rel, opts.seed, variant));
    std::uint64_t steps = start.step;
    nn::train(model, opt, data, opts, steps);
    return nn::make_checkpoint(model, opt, steps, std::move(stage), start.dataset_hash);
}

} // namespace

PseudoLabelRecord make_pseudo_label(std::uint64_t sample_id, const Vec2 &pos_a, const Vec2 &pos_b, double r,
                                    std::size_t round)
{
    if (!is_finite(pos_a) || !is_finite(pos_b))
        throw NumericError("pseudo-label for sample " + std::to_string(sample_id) + " has a non-finite prediction");
    if (std::isnan(r) || r < 0.0)
        throw ConfigError("pseudo-label distance threshold r must be non-negative");
    PseudoLabelRecord rec;
    rec.sample_id = sample_id;
    rec.pos_a = pos_a;
    rec.pos_b = pos_b;
    rec.agreement_m = distance(pos_a, pos_b);
    rec.accepted = rec.agreement_m <= r;
    if (rec.accepted)
        rec.label = midpoint(pos_a, pos_b);
    rec.round = round;
    return rec;
}

json semi_config_to_json(const SemiConfig &c)
{
    return {{"r", double_to_json(c.r)},
            {"max_rounds", c.max_rounds},
            {"min_growth", c.min_growth},
            {"pretrain", nn::train_options_to_json(c.pretrain)},
            {"finetune", nn::train_options_to_json(c.finetune)},
            {"stage3", nn::train_options_to_json(c.stage3)},
            {"seed_a", c.seed_a},
            {"seed_b", c.seed_b},
            {"target_mode", target_mode_name(c.target_mode)},
            {"pseudo_weight", c.pseudo_weight},
            {"weak_noise_rel", c.weak_noise_rel},
            {"strong_noise_rel", c.strong_noise_rel}};
}

SemiConfig semi_config_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    SemiConfig c;
    ConfigReader r(node, path, diag);
    r.read("r", c.r);
    r.read("max_rounds", c.max_rounds);
    r.read("min_growth", c.min_growth);
    if (const json *n = r.take("pretrain"))
        c.pretrain = nn::train_options_from_json(*n, r.key_path("pretrain"), diag);
    if (const json *n = r.take("finetune"))
        c.finetune = nn::train_options_from_json(*n, r.key_path("finetune"), diag);
    if (const json *n = r.take("stage3"))
        c.stage3 = nn::train_options_from_json(*n, r.key_path("stage3"), diag);
    r.read("seed_a", c.seed_a);
    r.read("seed_b", c.seed_b);
    std::string mode = target_mode_name(c.target_mode);
    r.read("target_mode", mode);
    if (mode == "self_prediction")
        c.target_mode = PseudoTargetMode::self_prediction;
    else if (mode == "self_prediction_mixed")
        c.target_mode = PseudoTargetMode::self_prediction_mixed;
    else if (mode == "labeled_interpolated")
        c.target_mode = PseudoTargetMode::labeled_interpolated;
    else
        r.error("target_mode",
                "unknown mode '" + mode + "' (self_prediction, self_prediction_mixed, labeled_interpolated)");
    r.read("pseudo_weight", c.pseudo_weight);
    r.read("weak_noise_rel", c.weak_noise_rel);
    r.read("strong_noise_rel", c.strong_noise_rel);
    r.finish();
    return c;
}

Diagnostics check_semi_config(const SemiConfig &c, const std::string &path)
{
    Diagnostics d;
    auto key = [&](const char *k) { return path.empty() ? std::string(k) : path + "." + k; };
    if (!(c.r > 0.0))
        d.push_back(key("r") + ": semi_supervised distance threshold must be > 0 (got " + std::to_string(c.r) + ")");
    if (c.max_rounds < 1)
        d.push_back(key("max_rounds") + ": must be >= 1");
    if (!(c.min_growth >= 0.0) || !std::isfinite(c.min_growth))
        d.push_back(key("min_growth") + ": must be finite and non-negative");
    if (!(c.pseudo_weight >= 0.0) || !std::isfinite(c.pseudo_weight))
        d.push_back(key("pseudo_weight") + ": must be finite and non-negative");
    if (!(c.weak_noise_rel >= 0.0) || !std::isfinite(c.weak_noise_rel))
        d.push_back(key("weak_noise_rel") + ": must be finite and non-negative");
    if (!(c.strong_noise_rel >= 0.0) || !std::isfinite(c.strong_noise_rel))
        d.push_back(key("strong_noise_rel") + ": must be finite and non-negative");
    for (auto &&[name, opts] : {std::pair{"pretrain", &c.pretrain}, {"finetune", &c.finetune}, {"stage3", &c.stage3}})
        for (auto &m : nn::check_train_options(*opts, key(name)))
            d.push_back(std::move(m));
    return d;
}

std::vector<std::size_t> labeled_indices(const Dataset &dataset)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (dataset.samples[i].position)
            out.push_back(i);
    return out;
}

std::vector<std::size_t> unlabeled_indices(const Dataset &dataset)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (!dataset.samples[i].position)
            out.push_back(i);
    return out;
}

namespace {

PositionTargets labeled_targets(const Dataset &dataset)
{
    PositionTargets t;
    for (std::size_t i : labeled_indices(dataset)) {
        t.indices.push_back(i);
        t.labels.push_back(*dataset.samples[i].position);
        t.weights.push_back(1.0);
    }
    return t;
}

} // namespace

nn::Checkpoint stage1_pretrain(const Dataset &dataset, const nn::ModelConfig &model_config, const SemiConfig &config,
                               const std::string &dataset_hash)
{
    const PositionTargets targets = labeled_targets(dataset);
    if (targets.indices.empty())
        throw ConfigError("stage 1 needs at least one labeled sample");
    nn::Model<float> model(model_config);
    nn::Optimizer<float> opt(config.pretrain.optimizer);
    std::uint64_t steps = 0;
    nn::TrainOptions opts = config.pretrain;
    opts.verbose = opts.verbose || config.verbose;
    const nn::TrainHistory hist = train_positions(model, opt, dataset, targets, opts, steps);
    nn::Checkpoint c = nn::make_checkpoint(model, opt, steps, "stage1", dataset_hash);
    c.extra["epoch_loss"] = hist.epoch_loss;
    return c;
}

Stage2Result stage2_pseudo_label(const nn::Checkpoint &generator, const Dataset &dataset,
                                 std::span<const std::size_t> unlabeled, const SemiConfig &config, std::size_t round)
{
    check_r(config.r);
    if (unlabeled.empty())
        throw ConfigError("stage 2 needs at least one unlabeled sample");

    PositionTargets targets;
    if (config.target_mode != PseudoTargetMode::labeled_interpolated) {
        const nn::Model<float> gen = nn::restore_model(generator);
        targets.indices.assign(unlabeled.begin(), unlabeled.end());
        targets.labels = predict_positions(gen, dataset, unlabeled);
    }
    if (config.target_mode != PseudoTargetMode::self_prediction)
        for (std::size_t i : labeled_indices(dataset)) {
            targets.indices.push_back(i);
            targets.labels.push_back(*dataset.samples[i].position);
        }

    const std::string tag = "stage2/round-" + std::to_string(round);
    Stage2Result out;
    nn::TrainOptions opts_a = config.finetune, opts_b = config.finetune;
    opts_a.seed = mix_seed(config.seed_a, round);
    opts_b.seed = mix_seed(config.seed_b, round);
    opts_a.verbose = opts_b.verbose = config.finetune.verbose || config.verbose;
    out.model_a = finetune_copy(generator, dataset, targets, opts_a, InterpVariant::A, tag + "/A");
    out.model_b = finetune_copy(generator, dataset, targets, opts_b, InterpVariant::B, tag + "/B");

    const auto pred_a =
        predict_positions(nn::restore_model(out.model_a), dataset, unlabeled, {0.0, 0, InterpVariant::A});
    const auto pred_b =
        predict_positions(nn::restore_model(out.model_b), dataset, unlabeled, {0.0, 0, InterpVariant::B});
    out.records.reserve(unlabeled.size());
    for (std::size_t j = 0; j < unlabeled.size(); ++j) {
        auto rec = make_pseudo_label(dataset.samples[unlabeled[j]].id, pred_a[j], pred_b[j], config.r, round);
        rec.sample_index = unlabeled[j];
        out.records.push_back(rec);
    }
    return out;
}

std::size_t stage3_training_size(const Dataset &dataset, std::span<const PseudoLabelRecord> records)
{
    std::size_t n = labeled_indices(dataset).size();
    for (const auto &r : records)
        n += r.accepted ? 1 : 0;
    return n;
}

namespace {

nn::Checkpoint finetune_on_records(const nn::Checkpoint &pretrained, const Dataset &dataset,
                                   std::span<const PseudoLabelRecord> records, const SemiConfig &config,
                                   nn::TrainOptions opts, std::string stage)
{
    PositionTargets targets = labeled_targets(dataset);
    if (targets.indices.empty())
        throw ConfigError("fine-tuning needs at least one labeled sample");
    for (const auto &r : records) {
        if (!r.accepted)
            continue;
        if (r.sample_index >= dataset.samples.size() || dataset.samples[r.sample_index].id != r.sample_id)
            throw ConfigError("pseudo-label record for sample " + std::to_string(r.sample_id) +
                              " does not match the dataset");
        targets.indices.push_back(r.sample_index);
        targets.labels.push_back(*r.label);
        targets.weights.push_back(config.pseudo_weight);
    }
    opts.verbose = opts.verbose || config.verbose;
    nn::Model<float> model = nn::restore_model(pretrained);
    nn::Optimizer<float> opt(opts.optimizer);
    std::uint64_t steps = pretrained.step;
    train_positions(model, opt, dataset, targets, opts, steps);
    nn::Checkpoint c = nn::make_checkpoint(model, opt, steps, std::move(stage), pretrained.dataset_hash);
    c.extra["training_size"] = targets.indices.size();
    return c;
}

} // namespace

nn::Checkpoint stage3_finetune(const nn::Checkpoint &pretrained, const Dataset &dataset,
                               std::span<const PseudoLabelRecord> records, const SemiConfig &config, std::size_t round)
{
    nn::TrainOptions opts = config.stage3;
    opts.seed = mix_seed(config.stage3.seed, 1000 + round);
    return finetune_on_records(pretrained, dataset, records, config, opts, "stage3/round-" + std::to_string(round));
}

SemiResult iterate_from(const nn::Checkpoint &stage1, const Dataset &dataset, const SemiConfig &config,
                        const RoundCallback &on_round)
{
    throw_if_any(check_semi_config(config, "semi"), "invalid semi-supervised configuration");
    const auto unlabeled = unlabeled_indices(dataset);
    SemiResult result;
    result.stage1 = stage1;
    const nn::Checkpoint *generator = &result.stage1;
    for (std::size_t round = 1; round <= config.max_rounds; ++round) {
        RoundResult rr;
        rr.round = round;
        rr.records = stage2_pseudo_label(*generator, dataset, unlabeled, config, round).records;
        for (const auto &r : rr.records)
            rr.accepted += r.accepted ? 1 : 0;
        rr.checkpoint = stage3_finetune(result.stage1, dataset, rr.records, config, round);
        if (config.verbose)
            std::cerr << "round " << round << ": accepted " << rr.accepted << " of " << rr.records.size() << "\n";
        if (on_round)
            on_round(rr);
        const std::size_t previous = result.rounds.empty() ? 0 : result.rounds.back().accepted;
        result.rounds.push_back(std::move(rr));
        generator = &result.rounds.back().checkpoint;
        if (round > 1) {
            const double growth =
                previous == 0 ? (result.rounds.back().accepted > 0 ? 1.0 : 0.0)
                              : (static_cast<double>(result.rounds.back().accepted) - static_cast<double>(previous)) /
                                    static_cast<double>(previous);
            if (growth < config.min_growth)
                break;
        }
    }
    return result;
}

SemiResult iterate(const Dataset &dataset, const nn::ModelConfig &model, const SemiConfig &config,
                   const std::string &dataset_hash, const RoundCallback &on_round)
{
    throw_if_any(check_semi_config(config, "semi"), "invalid semi-supervised configuration");
    return iterate_from(stage1_pretrain(dataset, model, config, dataset_hash), dataset, config, on_round);
}

BaselineResult fixmatch_distance_baseline(const nn::Checkpoint &pretrained, const Dataset &dataset,
                                          std::span<const std::size_t> unlabeled, const SemiConfig &config)
{
    check_r(config.r);
    if (unlabeled.empty())
        throw ConfigError("baseline needs at least one unlabeled sample");
    const nn::Model<float> model = nn::restore_model(pretrained);
    const auto weak = predict_positions(model, dataset, unlabeled,
                                        {config.weak_noise_rel, mix_seed(config.seed_a, 7001), std::nullopt});
    const auto strong = predict_positions(model, dataset, unlabeled,
                                          {config.strong_noise_rel, mix_seed(config.seed_b, 7002), InterpVariant::B});
    BaselineResult out;
    out.records.reserve(unlabeled.size());
    for (std::size_t j = 0; j < unlabeled.size(); ++j) {
        auto rec = make_pseudo_label(dataset.samples[unlabeled[j]].id, weak[j], strong[j], config.r, 1);
        rec.sample_index = unlabeled[j];
        if (rec.accepted)
            rec.label = weak[j];
        out.records.push_back(rec);
    }
    nn::TrainOptions opts = config.stage3;
    opts.seed = mix_seed(config.stage3.seed, 1001);
    out.checkpoint = finetune_on_records(pretrained, dataset, out.records, config, opts, "fixmatch");
    return out;
}

void write_pseudo_label_csv(std::span<const PseudoLabelRecord> records, const std::string &path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << "sample_id,ax,ay,bx,by,agreement,accepted,round,label_x,label_y\n" << std::setprecision(17);
    for (const auto &r : records) {
        out << r.sample_id << ',' << r.pos_a.x << ',' << r.pos_a.y << ',' << r.pos_b.x << ',' << r.pos_b.y << ','
            << r.agreement_m << ',' << (r.accepted ? 1 : 0) << ',' << r.round << ',';
        if (r.label)
            out << r.label->x << ',' << r.label->y;
        else
            out << ',';
        out << '\n';
    }
    if (!out)
        throw FormatError("failed writing '" + path + "'");
}

} // namespace csipos

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

#include "csipos/ensemble.hpp"

#include "csipos/hash.hpp"
#include "csipos/positioning_models.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace csipos {

std::string combiner_name(Combiner c)
{
    switch (c) {
    case Combiner::uniform_mean:
        return "uniform_mean";
    case Combiner::inverse_error_weighted:
        return "inverse_error_weighted";
    case Combiner::coordinate_median:
        return "coordinate_median";
    }
    return "?";
}

Combiner parse_combiner(const std::string &name)
{
    if (name == "uniform_mean" || name == "mean")
        return Combiner::uniform_mean;
    if (name == "inverse_error_weighted" || name == "weighted")
        return Combiner::inverse_error_weighted;
    if (name == "coordinate_median" || name == "median")
        return Combiner::coordinate_median;
    throw ConfigError("unknown combiner '" + name + "' (mean, weighted, median)");
}

json ensemble_spec_to_json(const EnsembleSpec &spec)
{
    json members = json::array();
    for (const auto &m : spec.members)
        members.push_back(
            {{"name", m.name}, {"model", nn::model_config_to_json(m.model)}, {"train", nn::train_options_to_json(m.train)}});
    return {{"members", members},
            {"combiner", combiner_name(spec.combiner)},
            {"validation_fraction", spec.validation_fraction},
            {"seed", spec.seed}};
}

EnsembleSpec ensemble_spec_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    EnsembleSpec spec;
    ConfigReader r(node, path, diag);
    if (const json *members = r.take("members")) {
        if (!members->is_array()) {
            r.error("members", "expected an array of member specs");
        } else {
            for (std::size_t i = 0; i < members->size(); ++i) {
                const std::string mp = r.key_path("members") + "[" + std::to_string(i) + "]";
                ConfigReader mr((*members)[i], mp, diag);
                MemberSpec m;
                m.name = "member-" + std::to_string(i);
                mr.read("name", m.name);
                if (const json *model = mr.take("model"))
                    m.model = nn::model_config_from_json(*model, mr.key_path("model"), diag);
                else
                    mr.error("model", "missing model config");
                if (const json *train = mr.take("train"))
                    m.train = nn::train_options_from_json(*train, mr.key_path("train"), diag);
                mr.finish();
                spec.members.push_back(std::move(m));
            }
        }
    }
    std::string combiner = combiner_name(spec.combiner);
    r.read("combiner", combiner);
    try {
        spec.combiner = parse_combiner(combiner);
    } catch (const ConfigError &e) {
        r.error("combiner", e.what());
    }
    r.read("validation_fraction", spec.validation_fraction);
    r.read("seed", spec.seed);
    r.finish();
    return spec;
}

Diagnostics check_ensemble_spec(const EnsembleSpec &spec, const std::string &path)
{
    Diagnostics d;
    auto key = [&](const std::string &k) { return path.empty() ? k : path + "." + k; };
    if (spec.members.size() < 2)
        d.push_back(key("members") + ": an ensemble needs at least 2 members");
    if (!(spec.validation_fraction > 0.0) || !(spec.validation_fraction < 1.0))
        d.push_back(key("validation_fraction") + ": must be in (0, 1)");
    for (std::size_t i = 0; i < spec.members.size(); ++i) {
        const std::string mp = key("members") + "[" + std::to_string(i) + "]";
        for (auto &m : nn::check_model_config(spec.members[i].model))
            d.push_back(mp + ".model: " + m);
        for (auto &m : nn::check_train_options(spec.members[i].train, mp + ".train"))
            d.push_back(std::move(m));
    }
    return d;
}

EnsembleSpec default_ensemble_spec(const nn::ModelConfig &base, const nn::TrainOptions &train, std::uint64_t seed)
{
    EnsembleSpec spec;
    spec.seed = seed;
    std::size_t k = 0;
    for (std::size_t depth : {2, 3})
        for (std::size_t width : {8, 12}) {
            MemberSpec m;
            m.name = "d" + std::to_string(depth) + "w" + std::to_string(width);
            m.model = nn::default_backbone_config(base.input, base.n_heads, width, depth);
            m.model.output_center = base.output_center;
            m.model.output_scale = base.output_scale;
            m.model.init_seed = base.init_seed + k;
            m.train = train;
            m.train.seed = train.seed + k;
            spec.members.push_back(std::move(m));
            ++k;
        }
    MemberSpec alt = spec.members.back();
    alt.name += "-reseeded";
    alt.model.init_seed = base.init_seed + 1000;
    alt.train.seed = train.seed + 1000;
    spec.members.push_back(std::move(alt));
    return spec;
}

Pool train_pool(const EnsembleSpec &spec, const Dataset &dataset, const std::string &dataset_hash)
{
    throw_if_any(check_ensemble_spec(spec, "ensemble"), "invalid ensemble spec");
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (dataset.samples[i].position)
            labeled.push_back(i);
    if (labeled.size() < 2)
        throw ConfigError("ensemble training needs at least 2 labeled samples");

    Pool pool;
    auto rng = make_rng(spec.seed, RngStream::split);
    std::shuffle(labeled.begin(), labeled.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(labeled.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, labeled.size() - 1);
    pool.validation_indices.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_val));
    pool.train_indices.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_val), labeled.end());
    std::sort(pool.validation_indices.begin(), pool.validation_indices.end());
    std::sort(pool.train_indices.begin(), pool.train_indices.end());

    PositionTargets targets;
    targets.indices = pool.train_indices;
    for (auto i : targets.indices)
        targets.labels.push_back(*dataset.samples[i].position);

    for (const auto &member : spec.members) {
        try {
            nn::Model<float> model(member.model);
            nn::Optimizer<float> opt(member.train.optimizer);
            std::uint64_t steps = 0;
            train_positions(model, opt, dataset, targets, member.train, steps);
            PoolMember pm;
            pm.name = member.name;
            pm.checkpoint = nn::make_checkpoint(model, opt, steps, "ensemble/" + member.name, dataset_hash);
            const auto pred = predict_positions(model, dataset, pool.validation_indices);
            double se = 0.0, e = 0.0;
            for (std::size_t j = 0; j < pred.size(); ++j) {
                const double d = error_distance(pred[j], *dataset.samples[pool.validation_indices[j]].position);
                se += d * d;
                e += d;
            }
            pm.validation_mse = se / static_cast<double>(pred.size());
            pm.validation_mean_error_m = e / static_cast<double>(pred.size());
            if (member.train.verbose)
                std::cerr << "member " << pm.name << ": validation mean error " << pm.validation_mean_error_m << " m\n";
            pool.members.push_back(std::move(pm));
        } catch (const std::exception &ex) {
            throw NumericError("ensemble member '" + member.name + "' failed to train: " + ex.what());
        }
    }
    return pool;
}

std::vector<double> combiner_weights(std::span<const double> validation_mse, Combiner combiner)
{
    const std::size_t n = validation_mse.size();
    if (n == 0)
        throw std::invalid_argument("combiner weights for an empty pool");
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    if (combiner != Combiner::inverse_error_weighted)
        return w;
    for (double m : validation_mse)
        if (!(m >= 0.0) || !std::isfinite(m))
            throw std::invalid_argument("validation MSE must be finite and non-negative");
    const auto zeros = static_cast<std::size_t>(std::count(validation_mse.begin(), validation_mse.end(), 0.0));
    if (zeros > 0) {
        // A perfect member takes all the weight.
        for (std::size_t i = 0; i < n; ++i)
            w[i] = validation_mse[i] == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
        return w;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        total += w[i] = 1.0 / validation_mse[i];
    for (auto &v : w)
        v /= total;
    return w;
}

namespace {

double median_of(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

Vec2 combine(std::span<const Vec2> predictions, Combiner combiner, std::span<const double> weights)
{
    if (predictions.empty())
        throw std::invalid_argument("combine: no predictions");
    if (!weights.empty() && weights.size() != predictions.size())
        throw std::invalid_argument("combine: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(predictions.size()) + " predictions");
    const std::size_t n = predictions.size();
    switch (combiner) {
    case Combiner::coordinate_median: {
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = predictions[i].x;
            ys[i] = predictions[i].y;
        }
        return {median_of(std::move(xs)), median_of(std::move(ys))};
    }
    case Combiner::inverse_error_weighted:
        if (weights.empty())
            throw std::invalid_argument("combine: inverse_error_weighted needs weights");
        [[fallthrough]];
    case Combiner::uniform_mean: {
        Vec2 out;
        if (combiner == Combiner::uniform_mean) {
            for (const auto &p : predictions) {
                out.x += p.x;
                out.y += p.y;
            }
            out.x /= static_cast<double>(n);
            out.y /= static_cast<double>(n);
            return out;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(weights[i] >= 0.0))
                throw std::invalid_argument("combine: negative weight");
            out.x += weights[i] * predictions[i].x;
            out.y += weights[i] * predictions[i].y;
            total += weights[i];
        }
        if (!(total > 0.0))
            throw std::invalid_argument("combine: weights sum to zero");
        out.x /= total;
        out.y /= total;
        return out;
    }
    }
    return {};
}

EnsembleReport evaluate_predictions(const std::vector<std::vector<Vec2>> &member_predictions,
                                    std::span<const double> validation_mse, Combiner combiner,
                                    std::span<const Vec2> truths, std::span<const SampleMeta> meta)
{
    if (member_predictions.empty())
        throw std::invalid_argument("evaluate_ensemble: empty pool");
    const std::size_t n = truths.size();
    for (const auto &p : member_predictions)
        if (p.size() != n)
            throw std::invalid_argument("evaluate_ensemble: member prediction count does not match the test set");
    EnsembleReport rep;
    for (const auto &p : member_predictions)
        rep.members.push_back(build_report(p, truths, meta));

    const auto weights = combiner_weights(validation_mse, combiner);
    const std::size_t m = member_predictions.size();
    rep.combined_predictions.resize(n);
    std::vector<Vec2> column(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k)
            column[k] = member_predictions[k][i];
        rep.combined_predictions[i] = combine(column, combiner, weights);

        // Jensen: |mean(p) - t|^2 <= mean |p - t|^2.
        const Vec2 avg = combine(column, Combiner::uniform_mean);
        const double lhs = std::pow(error_distance(avg, truths[i]), 2);
        double rhs = 0.0;
        for (const auto &p : column)
            rhs += std::pow(error_distance(p, truths[i]), 2);
        rhs /= static_cast<double>(m);
        const double excess = lhs - rhs;
        rep.max_jensen_excess = i == 0 ? excess : std::max(rep.max_jensen_excess, excess);
        if (excess > kJensenRelTol * std::max(1.0, rhs))
            rep.jensen_holds = false;
    }
    rep.combined = build_report(rep.combined_predictions, truths, meta);
    return rep;
}

EnsembleReport evaluate_ensemble(const Pool &pool, Combiner combiner, const Dataset &dataset,
                                 std::span<const std::size_t> test_indices)
{
    if (dataset.truth.size() != dataset.samples.size())
        throw ConfigError("ensemble evaluation needs ground-truth positions for the dataset");
    std::vector<std::vector<Vec2>> preds;
    std::vector<double> mse;
    for (const auto &m : pool.members) {
        preds.push_back(predict_positions(nn::restore_model(m.checkpoint), dataset, test_indices));
        mse.push_back(m.validation_mse);
    }
    std::vector<Vec2> truths;
    std::vector<SampleMeta> meta;
    for (auto i : test_indices) {
        truths.push_back(dataset.truth.at(i));
        const auto &s = dataset.samples[i];
        meta.push_back({s.id, s.is_los, s.origin_sector});
    }
    return evaluate_predictions(preds, mse, combiner, truths, meta);
}

void save_pool(const Pool &pool, const std::string &dir)
{
    std::filesystem::create_directories(dir);
    json members = json::array();
    for (std::size_t i = 0; i < pool.members.size(); ++i) {
        const auto &m = pool.members[i];
        const std::string file = "member-" + std::to_string(i) + ".ckpt";
        const std::string path = (std::filesystem::path(dir) / file).string();
        nn::save_checkpoint(m.checkpoint, path);
        members.push_back({{"name", m.name},
                           {"file", file},
                           {"sha256", sha256_file(path)},
                           {"validation_mse", m.validation_mse},
                           {"validation_mean_error_m", m.validation_mean_error_m}});
    }
    const json index = {{"members", members},
                        {"train_indices", pool.train_indices},
                        {"validation_indices", pool.validation_indices}};
    std::ofstream out(std::filesystem::path(dir) / "pool.json");
    out << index.dump(2) << '\n';
    if (!out)
        throw FormatError("failed writing pool index in '" + dir + "'");
}

Pool load_pool(const std::string &dir)
{
    const json index = read_json_file((std::filesystem::path(dir) / "pool.json").string());
    Pool pool;
    try {
        for (const auto &m : index.at("members")) {
            PoolMember pm;
            pm.name = m.at("name").get<std::string>();
            const std::string path = (std::filesystem::path(dir) / m.at("file").get<std::string>()).string();
            if (sha256_file(path) != m.at("sha256").get<std::string>())
                throw FormatError("pool member '" + path + "' does not match its recorded hash");
            pm.checkpoint = nn::load_checkpoint(path);
            pm.validation_mse = m.at("validation_mse").get<double>();
            pm.validation_mean_error_m = m.at("validation_mean_error_m").get<double>();
            pool.members.push_back(std::move(pm));
        }
        pool.train_indices = index.at("train_indices").get<std::vector<std::size_t>>();
        pool.validation_indices = index.at("validation_indices").get<std::vector<std::size_t>>();
    } catch (const json::exception &e) {
        throw FormatError("pool index in '" + dir + "' is malformed: " + e.what());
    }
    return pool;
}

} // namespace csipos

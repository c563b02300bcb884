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

#include "csipos/experiment.hpp"

#include "csipos/dataset_io.hpp"
#include "csipos/evaluation.hpp"
#include "csipos/hash.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace csipos {

namespace {

constexpr std::uint64_t kSeedStream = 100;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
{
    auto rng = make_rng(seed, kSeedStream, tag);
    return rng();
}

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

ExperimentMode parse_mode(const std::string &name)
{
    if (name == "semi")
        return ExperimentMode::semi;
    if (name == "ensemble")
        return ExperimentMode::ensemble;
    if (name == "decoupled")
        return ExperimentMode::decoupled;
    throw ConfigError("unknown mode '" + name + "' (semi, ensemble, decoupled)");
}

} // namespace

std::string mode_name(ExperimentMode m)
{
    switch (m) {
    case ExperimentMode::semi:
        return "semi";
    case ExperimentMode::ensemble:
        return "ensemble";
    case ExperimentMode::decoupled:
        return "decoupled";
    }
    return "?";
}

json experiment_to_json(const ExperimentConfig &c)
{
    json scene = scene_config_to_json(c.scene);
    scene.erase("seed");
    return {{"schema_version", c.schema_version},
            {"name", c.name},
            {"seed", c.seed},
            {"threads", c.threads},
            {"scene", scene},
            {"preprocess", {{"delay_taps", c.delay_taps}, {"write_features", c.write_features}}},
            {"model", {{"width", c.model.width}, {"depth", c.model.depth}, {"hidden", c.model.hidden}}},
            {"mode", mode_name(c.mode)},
            {"semi", semi_config_to_json(c.semi)},
            {"baseline", {{"fixmatch", c.fixmatch_baseline}}},
            {"ensemble",
             {{"combiner", combiner_name(c.ensemble.combiner)},
              {"validation_fraction", c.ensemble.validation_fraction},
              {"train", nn::train_options_to_json(c.ensemble.train)}}},
            {"decoupled",
             {{"train", nn::train_options_to_json(c.decoupled.train)},
              {"routing", routing_policy_name(c.decoupled.routing)},
              {"use_pseudo_labels", c.decoupled.use_pseudo_labels}}}};
}

ExperimentConfig experiment_from_json(const json &node, Diagnostics &diag)
{
    ExperimentConfig c;
    if (!node.is_object()) {
        diag.push_back("config: expected a JSON object at the top level");
        return c;
    }
    ConfigReader r(node, "", diag);
    if (!r.has("schema_version")) {
        r.error("schema_version", "missing (expected " + std::to_string(kSchemaVersion) + ")");
    } else {
        std::size_t v = 0;
        r.read("schema_version", v);
        if (v != static_cast<std::size_t>(kSchemaVersion))
            r.error("schema_version", "unsupported version " + std::to_string(v) + " (expected " +
                                          std::to_string(kSchemaVersion) + ")");
        c.schema_version = static_cast<int>(v);
    }
    r.read("name", c.name);
    r.read("seed", c.seed);
    std::size_t threads = c.threads;
    r.read("threads", threads);
    c.threads = static_cast<unsigned>(threads);
    if (const json *scene = r.take("scene")) {
        if (scene->is_object() && scene->contains("seed"))
            diag.push_back("scene.seed: not allowed here; the top-level seed drives scene generation");
        json copy = *scene;
        if (copy.is_object())
            copy.erase("seed");
        c.scene = scene_config_from_json(copy, "scene", diag);
    }
    c.scene.seed = c.seed;
    if (const json *pre = r.take("preprocess")) {
        ConfigReader pr(*pre, "preprocess", diag);
        pr.read("delay_taps", c.delay_taps);
        pr.read("write_features", c.write_features);
        pr.finish();
    }
    if (const json *model = r.take("model")) {
        ConfigReader mr(*model, "model", diag);
        mr.read("width", c.model.width);
        mr.read("depth", c.model.depth);
        mr.read("hidden", c.model.hidden);
        mr.finish();
    }
    std::string mode = mode_name(c.mode);
    r.read("mode", mode);
    try {
        c.mode = parse_mode(mode);
    } catch (const ConfigError &e) {
        r.error("mode", e.what());
    }
    if (const json *semi = r.take("semi"))
        c.semi = semi_config_from_json(*semi, "semi", diag);
    if (const json *base = r.take("baseline")) {
        ConfigReader br(*base, "baseline", diag);
        br.read("fixmatch", c.fixmatch_baseline);
        br.finish();
    }
    if (const json *ens = r.take("ensemble")) {
        ConfigReader er(*ens, "ensemble", diag);
        std::string combiner = combiner_name(c.ensemble.combiner);
        er.read("combiner", combiner);
        try {
            c.ensemble.combiner = parse_combiner(combiner);
        } catch (const ConfigError &e) {
            er.error("combiner", e.what());
        }
        er.read("validation_fraction", c.ensemble.validation_fraction);
        if (const json *t = er.take("train"))
            c.ensemble.train = nn::train_options_from_json(*t, "ensemble.train", diag);
        er.finish();
    }
    if (const json *dec = r.take("decoupled")) {
        ConfigReader dr(*dec, "decoupled", diag);
        if (const json *t = dr.take("train"))
            c.decoupled.train = nn::train_options_from_json(*t, "decoupled.train", diag);
        std::string routing = routing_policy_name(c.decoupled.routing);
        dr.read("routing", routing);
        try {
            c.decoupled.routing = parse_routing_policy(routing);
        } catch (const ConfigError &e) {
            dr.error("routing", e.what());
        }
        dr.read("use_pseudo_labels", c.decoupled.use_pseudo_labels);
        dr.finish();
    }
    r.finish();
    return c;
}

Diagnostics check_experiment(const ExperimentConfig &c)
{
    Diagnostics d;
    for (const auto &m : check_scene_config(c.scene))
        d.push_back("scene: " + m);
    if (c.delay_taps > c.scene.n_freq_bins)
        d.push_back("preprocess.delay_taps: " + std::to_string(c.delay_taps) + " exceeds scene.n_freq_bins (" +
                    std::to_string(c.scene.n_freq_bins) + ")");
    if (c.model.width < 1 || c.model.depth < 1 || c.model.hidden < 1)
        d.push_back("model: width, depth and hidden must all be >= 1");
    if (d.empty()) {
        for (const auto &m : nn::check_model_config(experiment_model_config(c)))
            d.push_back("model: " + m);
    }
    for (auto &m : check_semi_config(c.semi, "semi"))
        d.push_back(std::move(m));
    if (!(c.ensemble.validation_fraction > 0.0) || !(c.ensemble.validation_fraction < 1.0))
        d.push_back("ensemble.validation_fraction: must be in (0, 1)");
    for (auto &m : nn::check_train_options(c.ensemble.train, "ensemble.train"))
        d.push_back(std::move(m));
    for (auto &m : nn::check_train_options(c.decoupled.train, "decoupled.train"))
        d.push_back(std::move(m));
    return d;
}

Diagnostics validate_config(const std::string &path)
{
    Diagnostics diag;
    json node;
    try {
        node = read_json_file(path);
    } catch (const std::exception &e) {
        return {e.what()};
    }
    // Fields with parse errors keep their defaults, so range checks still apply
    // to everything else and the caller sees every problem at once.
    const ExperimentConfig c = experiment_from_json(node, diag);
    for (auto &d : check_experiment(c))
        diag.push_back(std::move(d));
    return diag;
}

ExperimentConfig load_experiment(const std::string &path)
{
    Diagnostics diag;
    const ExperimentConfig c = experiment_from_json(read_json_file(path), diag);
    for (auto &d : check_experiment(c))
        diag.push_back(std::move(d));
    throw_if_any(diag, "invalid config '" + path + "'");
    return c;
}

nn::ModelConfig experiment_model_config(const ExperimentConfig &c, std::size_t n_heads)
{
    nn::ModelConfig m = nn::default_backbone_config(input_shape(c.scene, c.delay_taps), n_heads, c.model.width,
                                                    c.model.depth, c.model.hidden);
    set_output_normalization(m, c.scene);
    m.init_seed = derive_seed(c.seed, 1);
    return m;
}

SemiConfig experiment_semi_config(const ExperimentConfig &c)
{
    SemiConfig s = c.semi;
    s.pretrain.seed = derive_seed(c.seed, 1000 + c.semi.pretrain.seed);
    s.finetune.seed = derive_seed(c.seed, 2000 + c.semi.finetune.seed);
    s.stage3.seed = derive_seed(c.seed, 3000 + c.semi.stage3.seed);
    s.seed_a = derive_seed(c.seed, 4000 + c.semi.seed_a);
    s.seed_b = derive_seed(c.seed, 5000 + c.semi.seed_b);
    return s;
}

EnsembleSpec experiment_ensemble_spec(const ExperimentConfig &c)
{
    nn::TrainOptions train = c.ensemble.train;
    train.seed = derive_seed(c.seed, 6000 + c.ensemble.train.seed);
    EnsembleSpec spec = default_ensemble_spec(experiment_model_config(c), train, derive_seed(c.seed, 6500));
    spec.combiner = c.ensemble.combiner;
    spec.validation_fraction = c.ensemble.validation_fraction;
    return spec;
}

DecoupledTrainOptions experiment_decoupled_options(const ExperimentConfig &c)
{
    DecoupledTrainOptions o;
    o.train = c.decoupled.train;
    o.train.seed = derive_seed(c.seed, 7000 + c.decoupled.train.seed);
    o.noise_rel = c.decoupled.train.noise_rel;
    o.pseudo_weight = c.semi.pseudo_weight;
    return o;
}

json manifest_to_json(const ExperimentManifest &m)
{
    json artifacts = json::array();
    for (const auto &a : m.artifacts)
        artifacts.push_back({{"role", a.role}, {"path", a.path}, {"sha256", a.sha256}});
    return {{"tool_version", m.tool_version},
            {"seed", m.seed},
            {"run_dir", m.run_dir},
            {"config", m.config},
            {"dataset_hash", m.dataset_hash},
            {"checkpoint_hashes", m.checkpoint_hashes},
            {"artifacts", artifacts},
            {"reports", m.reports},
            {"started_utc", m.started_utc},
            {"finished_utc", m.finished_utc}};
}

std::string resolve_run_root(const std::optional<std::string> &cli_value)
{
    if (const char *env = std::getenv(kRunDirEnv); env && *env)
        return env;
    return cli_value.value_or("runs");
}

std::string create_run_dir(const std::string &root)
{
    fs::create_directories(root);
    for (unsigned i = 1; i < 100000; ++i) {
        std::ostringstream name;
        name << "run-" << std::setw(4) << std::setfill('0') << i;
        const fs::path dir = fs::path(root) / name.str();
        // create_directory fails on an existing directory, so earlier runs are never reused.
        if (fs::create_directory(dir))
            return dir.string();
    }
    throw FormatError("no free run directory under '" + root + "'");
}

namespace {

class RunWriter {
  public:
    RunWriter(const std::string &dir, ExperimentManifest &manifest, bool verbose)
        : dir_(dir), manifest_(manifest), verbose_(verbose)
    {
    }

    std::string path(const std::string &name) const { return (fs::path(dir_) / name).string(); }

    void artifact(const std::string &role, const std::string &name)
    {
        manifest_.artifacts.push_back({role, name, ""});
        if (verbose_)
            std::cerr << "  wrote " << name << "\n";
    }

    void checkpoint(const std::string &stage, const std::string &name, const nn::Checkpoint &ckpt)
    {
        nn::save_checkpoint(ckpt, path(name));
        artifact("checkpoint:" + stage, name);
    }

    void report(const std::string &tag, const EvalReport &report)
    {
        write_report_csv(report, path("report-" + tag + ".csv"));
        write_summary_csv(report, path("summary-" + tag + ".csv"));
        write_cdf_csv(report, path("cdf-" + tag + ".csv"));
        for (const char *kind : {"report", "summary", "cdf"}) {
            const std::string name = std::string(kind) + "-" + tag + ".csv";
            artifact(kind, name);
            manifest_.reports.push_back(name);
        }
    }

    // Hashes are taken once every file is final.
    void seal()
    {
        for (auto &a : manifest_.artifacts) {
            a.sha256 = sha256_file(path(a.path));
            if (a.role.rfind("checkpoint:", 0) == 0)
                manifest_.checkpoint_hashes[a.role.substr(11)] = a.sha256;
        }
    }

  private:
    std::string dir_;
    ExperimentManifest &manifest_;
    bool verbose_;
};

std::vector<SampleMeta> meta_for(const Dataset &ds, std::span<const std::size_t> idx)
{
    std::vector<SampleMeta> m;
    for (auto i : idx)
        m.push_back({ds.samples[i].id, ds.samples[i].is_los, ds.samples[i].origin_sector});
    return m;
}

std::vector<Vec2> truth_for(const Dataset &ds, std::span<const std::size_t> idx)
{
    std::vector<Vec2> t;
    for (auto i : idx)
        t.push_back(ds.truth.at(i));
    return t;
}

EvalReport evaluate_checkpoint(const nn::Checkpoint &ckpt, const Dataset &ds, std::span<const std::size_t> idx)
{
    const auto pred = predict_positions(nn::restore_model(ckpt), ds, idx);
    return build_report(pred, truth_for(ds, idx), meta_for(ds, idx));
}

void write_stage_table(const std::vector<std::pair<std::string, EvalReport>> &rows, const std::string &path)
{
    std::ofstream out(path);
    out << "stage,n,mean_error_m";
    for (int p : kReportPercentiles)
        out << ",p" << p << "_m";
    out << '\n' << std::setprecision(17);
    for (const auto &[stage, r] : rows) {
        out << stage << ',' << r.n << ',' << r.mean_error_m;
        for (int p : kReportPercentiles)
            out << ',' << r.percentiles.at(p);
        out << '\n';
    }
    if (!out)
        throw FormatError("failed writing '" + path + "'");
}

} // namespace

ExperimentManifest run_experiment(const ExperimentConfig &config, const std::string &run_dir, bool verbose)
{
    throw_if_any(check_experiment(config), "invalid experiment config");
    if (config.threads > 0)
        set_thread_count(config.threads);

    ExperimentManifest manifest;
    manifest.run_dir = run_dir;
    manifest.seed = config.seed;
    manifest.config = experiment_to_json(config);
    manifest.started_utc = utc_now();
    RunWriter w(run_dir, manifest, verbose);
    auto log = [&](const std::string &msg) {
        if (verbose)
            std::cerr << "[" << config.name << "] " << msg << "\n";
    };

    {
        std::ofstream out(w.path("config.json"));
        out << manifest.config.dump(2) << '\n';
    }
    w.artifact("config", "config.json");

    log("generating " + std::to_string(config.scene.total_receivers()) + " receivers");
    const Dataset dataset = generate_dataset(config.scene);
    write_dataset(dataset, w.path("dataset.bin"));
    write_truth_csv(dataset, w.path("truth.csv"));
    manifest.dataset_hash = sha256_file(w.path("dataset.bin"));
    w.artifact("dataset", "dataset.bin");
    w.artifact("truth", "truth.csv");

    if (config.write_features) {
        log("preprocessing");
        FeatureFile ff;
        ff.config = dataset.config;
        const nn::Shape shape = input_shape(config.scene, config.delay_taps);
        ff.dims = {static_cast<std::uint16_t>(shape.c), static_cast<std::uint16_t>(shape.h),
                   static_cast<std::uint16_t>(shape.w)};
        ff.records.resize(dataset.samples.size());
        parallel_for(dataset.samples.size(), [&](std::size_t i) {
            const Sample &s = dataset.samples[i];
            ff.records[i] = {s.id, s.sector, s.is_los, s.position, encode_model_input(*s.csi, shape.w)};
        });
        write_feature_file(ff, w.path("features.bin"));
        w.artifact("features", "features.bin");
    }

    const auto test = unlabeled_indices(dataset);
    if (test.empty())
        throw ConfigError("evaluation needs unlabeled samples; labeled_fraction leaves none");
    EvalReport final_report;

    switch (config.mode) {
    case ExperimentMode::semi: {
        const SemiConfig semi = experiment_semi_config(config);
        log("stage 1");
        const nn::Checkpoint stage1 =
            stage1_pretrain(dataset, experiment_model_config(config), semi, manifest.dataset_hash);
        w.checkpoint("stage1", "stage1.ckpt", stage1);
        std::vector<std::pair<std::string, EvalReport>> rows;
        rows.emplace_back("stage1", evaluate_checkpoint(stage1, dataset, test));
        w.report("stage1", rows.back().second);

        const SemiResult result = iterate_from(stage1, dataset, semi, [&](const RoundResult &rr) {
            const std::string tag = "round-" + std::to_string(rr.round);
            log(tag + ": accepted " + std::to_string(rr.accepted) + " of " + std::to_string(rr.records.size()));
            write_pseudo_label_csv(rr.records, w.path("pseudo-" + tag + ".csv"));
            w.artifact("pseudo_labels", "pseudo-" + tag + ".csv");
            w.checkpoint("stage3/" + tag, "stage3-" + tag + ".ckpt", rr.checkpoint);
            rows.emplace_back("stage3/" + tag, evaluate_checkpoint(rr.checkpoint, dataset, test));
            w.report("stage3-" + tag, rows.back().second);
        });
        final_report = rows.back().second;

        if (config.fixmatch_baseline) {
            log("fixmatch-distance baseline");
            const BaselineResult base = fixmatch_distance_baseline(stage1, dataset, test, semi);
            write_pseudo_label_csv(base.records, w.path("pseudo-fixmatch.csv"));
            w.artifact("pseudo_labels", "pseudo-fixmatch.csv");
            w.checkpoint("fixmatch", "fixmatch.ckpt", base.checkpoint);
            rows.emplace_back("fixmatch", evaluate_checkpoint(base.checkpoint, dataset, test));
            w.report("fixmatch", rows.back().second);
        }
        write_stage_table(rows, w.path("stages.csv"));
        w.artifact("stages", "stages.csv");
        break;
    }
    case ExperimentMode::ensemble: {
        log("training ensemble pool");
        const Pool pool = train_pool(experiment_ensemble_spec(config), dataset, manifest.dataset_hash);
        save_pool(pool, w.path("pool"));
        for (std::size_t i = 0; i < pool.members.size(); ++i)
            w.artifact("checkpoint:ensemble/" + pool.members[i].name, "pool/member-" + std::to_string(i) + ".ckpt");
        w.artifact("pool_index", "pool/pool.json");
        const EnsembleReport rep = evaluate_ensemble(pool, config.ensemble.combiner, dataset, test);
        std::vector<std::pair<std::string, EvalReport>> rows;
        for (std::size_t i = 0; i < rep.members.size(); ++i) {
            rows.emplace_back("member/" + pool.members[i].name, rep.members[i]);
            w.report("member-" + pool.members[i].name, rep.members[i]);
        }
        rows.emplace_back("ensemble/" + combiner_name(config.ensemble.combiner), rep.combined);
        w.report("ensemble", rep.combined);
        write_stage_table(rows, w.path("stages.csv"));
        w.artifact("stages", "stages.csv");
        if (!rep.jensen_holds)
            throw NumericError("ensemble averaging violated the Jensen bound (excess " +
                               std::to_string(rep.max_jensen_excess) + ")");
        final_report = rep.combined;
        break;
    }
    case ExperimentMode::decoupled: {
        DecoupledHeadModel model(experiment_model_config(config, kSectorCount), config.scene);
        std::vector<PseudoLabel> pseudo;
        if (config.decoupled.use_pseudo_labels) {
            log("one semi-supervised round for pseudo-labels");
            SemiConfig semi = experiment_semi_config(config);
            const nn::Checkpoint stage1 =
                stage1_pretrain(dataset, experiment_model_config(config), semi, manifest.dataset_hash);
            for (const auto &r : stage2_pseudo_label(stage1, dataset, test, semi, 1).records)
                if (r.accepted)
                    pseudo.push_back({r.sample_index, *r.label});
        }
        if (config.decoupled.routing == RoutingPolicy::nearest_centroid)
            model.set_centroids(compute_sector_centroids(dataset));
        log("training decoupled heads");
        model.train(dataset, pseudo, experiment_decoupled_options(config));
        w.checkpoint("decoupled", "decoupled.ckpt", model.checkpoint("decoupled", manifest.dataset_hash));
        const auto pred = model.predict(dataset, test, config.decoupled.routing);
        final_report = build_report(pred, truth_for(dataset, test), meta_for(dataset, test));
        w.report("decoupled", final_report);
        break;
    }
    }

    write_summary_csv(final_report, w.path("summary.csv"));
    w.artifact("summary", "summary.csv");
    manifest.reports.push_back("summary.csv");
    log("final: " + format_summary(final_report));

    w.seal();
    manifest.finished_utc = utc_now();
    std::ofstream out(w.path("manifest.json"));
    out << manifest_to_json(manifest).dump(2) << '\n';
    if (!out)
        throw FormatError("failed writing manifest in '" + run_dir + "'");
    return manifest;
}

ExperimentManifest run_pipeline(const std::string &config_path, const RunOptions &options)
{
    ExperimentConfig config = load_experiment(config_path);
    if (options.seed) {
        config.seed = *options.seed;
        config.scene.seed = *options.seed;
    }
    const std::string dir = create_run_dir(resolve_run_root(options.run_root));
    return run_experiment(config, dir, options.verbose);
}

std::vector<std::string> verify_manifest(const std::string &manifest_path)
{
    const json m = read_json_file(manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<std::string> problems;
    for (const auto &a : m.at("artifacts")) {
        const fs::path p = dir / a.at("path").get<std::string>();
        if (!fs::exists(p)) {
            problems.push_back("missing artifact " + p.string());
            continue;
        }
        if (sha256_file(p.string()) != a.at("sha256").get<std::string>())
            problems.push_back("hash mismatch for " + p.string());
    }
    return problems;
}

} // namespace csipos

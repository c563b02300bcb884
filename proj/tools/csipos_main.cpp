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

#include "CLI11.hpp"

#include "csipos/dataset_io.hpp"
#include "csipos/ensemble.hpp"
#include "csipos/evaluation.hpp"
#include "csipos/experiment.hpp"
#include "csipos/hash.hpp"
#include "csipos/positioning_models.hpp"
#include "csipos/semi_supervised.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace csipos;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool verbose = false;
};

ExperimentConfig load_config(const std::string &path, const Globals &g)
{
    ExperimentConfig c = load_experiment(path);
    if (g.seed) {
        c.seed = *g.seed;
        c.scene.seed = *g.seed;
    }
    if (g.threads > 0)
        c.threads = g.threads;
    if (c.threads > 0)
        set_thread_count(c.threads);
    return c;
}

std::string default_truth_path(const std::string &data) { return data + ".truth.csv"; }

Dataset load_data(const std::string &path, const std::string &truth)
{
    Dataset ds = read_dataset(path);
    const std::string t = truth.empty() ? default_truth_path(path) : truth;
    if (fs::exists(t))
        read_truth_csv(ds, t);
    else if (!truth.empty())
        throw FormatError("truth file '" + truth + "' not found");
    return ds;
}

std::vector<std::size_t> split_indices(const Dataset &ds, const std::string &split)
{
    if (split == "unlabeled")
        return unlabeled_indices(ds);
    if (split == "labeled")
        return labeled_indices(ds);
    if (split == "all") {
        std::vector<std::size_t> all(ds.samples.size());
        for (std::size_t i = 0; i < all.size(); ++i)
            all[i] = i;
        return all;
    }
    throw ConfigError("unknown split '" + split + "' (unlabeled, labeled, all)");
}

void require_truth(const Dataset &ds)
{
    if (ds.truth.size() != ds.samples.size())
        throw ConfigError("evaluation needs a ground-truth file (--truth, or <data>.truth.csv next to the dataset)");
}

void write_reports(const EvalReport &rep, const std::string &report, const std::string &summary,
                   const std::string &cdf)
{
    if (!report.empty())
        write_report_csv(rep, report);
    if (!summary.empty())
        write_summary_csv(rep, summary);
    if (!cdf.empty())
        write_cdf_csv(rep, cdf);
    std::cout << format_summary(rep) << "\n";
}

EvalReport report_for(const std::vector<Vec2> &pred, const Dataset &ds, const std::vector<std::size_t> &idx)
{
    std::vector<Vec2> truth;
    std::vector<SampleMeta> meta;
    for (auto i : idx) {
        truth.push_back(ds.truth[i]);
        meta.push_back({ds.samples[i].id, ds.samples[i].is_los, ds.samples[i].origin_sector});
    }
    return build_report(pred, truth, meta);
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"csipos: CSI fingerprint positioning toolkit"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    auto *seed_opt = app.add_option("--seed", seed_value, "Override the experiment seed");
    app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)");
    app.add_flag("-v,--verbose", g.verbose, "Progress output on stderr");
    app.set_version_flag("--version", std::string(kToolVersion));

    std::string config, data, out, truth, report, summary, cdf, ckpt, pool_dir, spec, combiner = "mean",
                                                                                   split = "unlabeled", records,
                                                                                   run_dir;
    std::size_t rounds = 0, delay_taps = 0;
    double r = 0.0;

    auto *gen = app.add_subcommand("gen-data", "Simulate a CSI dataset");
    gen->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Dataset file")->required();
    gen->add_option("--truth", truth, "Ground-truth CSV (default <out>.truth.csv)");

    auto *pre = app.add_subcommand("preprocess", "Encode CSI into angle-delay model inputs");
    pre->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", out, "Feature file")->required();
    pre->add_option("--delay-taps", delay_taps, "Delay taps kept (0 = all)");

    auto *train = app.add_subcommand("train", "Supervised training on the labeled samples");
    train->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    train->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "Checkpoint file")->required();

    auto *semi = app.add_subcommand("semi", "Dual-model pseudo-labelling and fine-tuning");
    semi->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    semi->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
    semi->add_option("--rounds", rounds, "Override semi.max_rounds");
    semi->add_option("--r", r, "Override the agreement threshold in meters");
    semi->add_option("--out", out, "Final checkpoint")->required();
    semi->add_option("--records", records, "Pseudo-label CSV prefix (one file per round)");

    auto *ens_train = app.add_subcommand("ensemble-train", "Train a model pool");
    ens_train->add_option("--spec", spec, "Ensemble spec JSON")->check(CLI::ExistingFile);
    ens_train->add_option("--config", config, "Experiment config (default pool)")->check(CLI::ExistingFile);
    ens_train->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    ens_train->add_option("--out-dir", out, "Pool directory")->required();

    auto *ens_eval = app.add_subcommand("ensemble-eval", "Evaluate a model pool");
    ens_eval->add_option("--pool", pool_dir, "Pool directory")->required()->check(CLI::ExistingDirectory);
    ens_eval->add_option("--combiner", combiner, "mean, weighted or median");
    ens_eval->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    ens_eval->add_option("--truth", truth, "Ground-truth CSV");
    ens_eval->add_option("--report", report, "Per-sample report CSV")->required();
    ens_eval->add_option("--summary", summary, "Summary CSV");
    ens_eval->add_option("--cdf", cdf, "CDF CSV");
    ens_eval->add_option("--split", split, "unlabeled, labeled or all");

    auto *dec = app.add_subcommand("train-decoupled", "Shared backbone with per-sector heads");
    dec->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    dec->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
    dec->add_option("--out", out, "Checkpoint file")->required();

    auto *eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", truth, "Ground-truth CSV");
    eval->add_option("--report", report, "Per-sample report CSV");
    eval->add_option("--summary", summary, "Summary CSV");
    eval->add_option("--cdf", cdf, "CDF CSV");
    eval->add_option("--split", split, "unlabeled, labeled or all");

    auto *run = app.add_subcommand("run", "Full pipeline into a fresh run directory");
    run->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
    run->add_option("--run-dir", run_dir, std::string("Run root (") + kRunDirEnv + " takes precedence)");

    auto *validate = app.add_subcommand("validate", "Check a config file");
    validate->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        // --help and --version report success; usage errors share the config-error status.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (*seed_opt)
        g.seed = seed_value;
    if (g.threads > 0)
        set_thread_count(g.threads);

    try {
        if (*validate) {
            const auto diag = validate_config(config);
            if (diag.empty()) {
                std::cout << config << ": ok\n";
                return 0;
            }
            for (const auto &d : diag)
                std::cerr << config << ": " << d << "\n";
            return 2;
        }
        if (*gen) {
            const ExperimentConfig c = load_config(config, g);
            const Dataset ds = generate_dataset(c.scene);
            write_dataset(ds, out);
            write_truth_csv(ds, truth.empty() ? default_truth_path(out) : truth);
            std::cout << "wrote " << ds.samples.size() << " samples (" << ds.labeled_count() << " labeled) sha256 "
                      << sha256_file(out) << "\n";
            return 0;
        }
        if (*pre) {
            const Dataset ds = read_dataset(data);
            FeatureFile ff;
            ff.config = ds.config;
            const nn::Shape shape = input_shape(ds.config, delay_taps);
            ff.dims = {static_cast<std::uint16_t>(shape.c), static_cast<std::uint16_t>(shape.h),
                       static_cast<std::uint16_t>(shape.w)};
            ff.records.resize(ds.samples.size());
            parallel_for(ds.samples.size(), [&](std::size_t i) {
                const Sample &s = ds.samples[i];
                ff.records[i] = {s.id, s.sector, s.is_los, s.position, encode_model_input(*s.csi, shape.w)};
            });
            write_feature_file(ff, out);
            std::cout << "wrote " << ff.records.size() << " feature records\n";
            return 0;
        }
        if (*train) {
            const ExperimentConfig c = load_config(config, g);
            const Dataset ds = load_data(data, truth);
            SemiConfig s = experiment_semi_config(c);
            s.verbose = g.verbose;
            nn::ModelConfig m = experiment_model_config(c);
            if (m.input.w != input_shape(ds.config, c.delay_taps).w || !(ds.config.n_freq_bins >= m.input.w))
                throw ConfigError("dataset dimensions do not match the config");
            const auto ck = stage1_pretrain(ds, m, s, sha256_file(data));
            nn::save_checkpoint(ck, out);
            std::cout << "wrote " << out << " (" << ck.stage << ", " << ck.step << " steps)\n";
            return 0;
        }
        if (*semi) {
            const ExperimentConfig c = load_config(config, g);
            const Dataset ds = load_data(data, truth);
            SemiConfig s = experiment_semi_config(c);
            if (rounds > 0)
                s.max_rounds = rounds;
            if (r != 0.0)
                s.r = r;
            s.verbose = g.verbose;
            const auto res = iterate(ds, experiment_model_config(c), s, sha256_file(data), [&](const RoundResult &rr) {
                std::cout << "round " << rr.round << ": accepted " << rr.accepted << " of " << rr.records.size()
                          << "\n";
                if (!records.empty())
                    write_pseudo_label_csv(rr.records, records + "-round-" + std::to_string(rr.round) + ".csv");
            });
            nn::save_checkpoint(res.final_checkpoint(), out);
            if (ds.truth.size() == ds.samples.size()) {
                const auto idx = unlabeled_indices(ds);
                std::cout << "stage1: "
                          << format_summary(report_for(
                                 predict_positions(nn::restore_model(res.stage1), ds, idx), ds, idx))
                          << "\nfinal:  "
                          << format_summary(report_for(
                                 predict_positions(nn::restore_model(res.final_checkpoint()), ds, idx), ds, idx))
                          << "\n";
            }
            return 0;
        }
        if (*ens_train) {
            EnsembleSpec es;
            if (!spec.empty()) {
                Diagnostics diag;
                es = ensemble_spec_from_json(read_json_file(spec), "ensemble", diag);
                throw_if_any(diag, "invalid ensemble spec '" + spec + "'");
                if (g.seed)
                    es.seed = *g.seed;
            } else if (!config.empty()) {
                es = experiment_ensemble_spec(load_config(config, g));
            } else {
                throw ConfigError("ensemble-train needs --spec or --config");
            }
            for (auto &m : es.members)
                m.train.verbose = m.train.verbose || g.verbose;
            const Dataset ds = load_data(data, truth);
            const Pool pool = train_pool(es, ds, sha256_file(data));
            save_pool(pool, out);
            for (const auto &m : pool.members)
                std::cout << m.name << ": validation mean error " << m.validation_mean_error_m << " m\n";
            return 0;
        }
        if (*ens_eval) {
            const Dataset ds = load_data(data, truth);
            require_truth(ds);
            const Pool pool = load_pool(pool_dir);
            const auto idx = split_indices(ds, split);
            const EnsembleReport rep = evaluate_ensemble(pool, parse_combiner(combiner), ds, idx);
            for (std::size_t i = 0; i < rep.members.size(); ++i)
                std::cout << pool.members[i].name << ": " << format_summary(rep.members[i]) << "\n";
            std::cout << "ensemble (" << combiner << "): ";
            write_reports(rep.combined, report, summary, cdf);
            if (!rep.jensen_holds) {
                std::cerr << "warning: averaging bound violated by " << rep.max_jensen_excess << "\n";
                return 1;
            }
            return 0;
        }
        if (*dec) {
            const ExperimentConfig c = load_config(config, g);
            const Dataset ds = load_data(data, truth);
            DecoupledHeadModel model(experiment_model_config(c, kSectorCount), ds.config);
            if (c.decoupled.routing == RoutingPolicy::nearest_centroid)
                model.set_centroids(compute_sector_centroids(ds));
            auto opts = experiment_decoupled_options(c);
            opts.train.verbose = opts.train.verbose || g.verbose;
            model.train(ds, {}, opts);
            nn::save_checkpoint(model.checkpoint("decoupled", sha256_file(data)), out);
            std::cout << "wrote " << out << "\n";
            return 0;
        }
        if (*eval) {
            const Dataset ds = load_data(data, truth);
            require_truth(ds);
            const nn::Checkpoint ck = nn::load_checkpoint(ckpt);
            const auto idx = split_indices(ds, split);
            std::vector<Vec2> pred;
            if (ck.config.n_heads == kSectorCount) {
                const DecoupledHeadModel model(ck, ds.config);
                pred = model.predict(ds, idx, model.centroids() ? RoutingPolicy::nearest_centroid : RoutingPolicy::known);
            } else {
                pred = predict_positions(nn::restore_model(ck), ds, idx);
            }
            write_reports(report_for(pred, ds, idx), report, summary, cdf);
            return 0;
        }
        if (*run) {
            RunOptions opts;
            if (!run_dir.empty())
                opts.run_root = run_dir;
            opts.seed = g.seed;
            opts.verbose = g.verbose;
            if (g.threads > 0)
                set_thread_count(g.threads);
            const ExperimentManifest m = run_pipeline(config, opts);
            std::cout << "run directory: " << m.run_dir << "\ndataset sha256: " << m.dataset_hash << "\n";
            return 0;
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

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
#include "csipos/semi_supervised.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace csipos;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = CSIPOS_CONFIG_DIR;
const std::string kTiny = kConfigDir + "/tiny.json";

std::string slurp(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const std::string &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

bool any_contains(const Diagnostics &diag, const std::string &needle)
{
    for (const auto &d : diag)
        if (d.find(needle) != std::string::npos)
            return true;
    return false;
}

class EnvGuard {
  public:
    explicit EnvGuard(const char *name) : name_(name)
    {
        if (const char *v = std::getenv(name))
            old_ = v;
    }
    ~EnvGuard()
    {
        if (old_)
            setenv(name_, old_->c_str(), 1);
        else
            unsetenv(name_);
    }

  private:
    const char *name_;
    std::optional<std::string> old_;
};

} // namespace

TEST(ConfigValidation, ShippedConfigsAreValid)
{
    int n = 0;
    for (const auto &e : fs::directory_iterator(kConfigDir)) {
        if (e.path().extension() != ".json")
            continue;
        ++n;
        const auto diag = validate_config(e.path().string());
        EXPECT_TRUE(diag.empty()) << e.path() << ": " << (diag.empty() ? "" : diag.front());
    }
    EXPECT_GE(n, 4);
}

TEST(ConfigValidation, ReportsEveryProblem)
{
    csipos::testing::TempDir dir("cfg");
    const std::string path = dir.file("bad.json");
    write_text(path, R"({"schema_version": 1, "colour": "blue",
                          "scene": {"labeled_fraction": 1.5},
                          "semi": {"r": -1}})");
    const auto diag = validate_config(path);
    EXPECT_GE(diag.size(), 3u);
    EXPECT_TRUE(any_contains(diag, "colour"));
    EXPECT_TRUE(any_contains(diag, "labeled_fraction"));
    EXPECT_TRUE(any_contains(diag, "semi_supervised") || any_contains(diag, "semi.r"));
    EXPECT_THROW(load_experiment(path), ConfigError);
}

TEST(ConfigValidation, MalformedJsonAndMissingFile)
{
    csipos::testing::TempDir dir("cfg");
    write_text(dir.file("broken.json"), "{\"seed\": ");
    EXPECT_FALSE(validate_config(dir.file("broken.json")).empty());
    EXPECT_FALSE(validate_config(dir.file("absent.json")).empty());
}

TEST(ConfigValidation, JsonRoundTrip)
{
    const ExperimentConfig c = load_experiment(kConfigDir + "/desk.json");
    Diagnostics diag;
    const ExperimentConfig back = experiment_from_json(experiment_to_json(c), diag);
    EXPECT_TRUE(diag.empty()) << (diag.empty() ? "" : diag.front());
    EXPECT_EQ(experiment_to_json(back), experiment_to_json(c));
    EXPECT_TRUE(check_experiment(back).empty());
}

TEST(RunRoot, EnvironmentOverridesCli)
{
    EnvGuard guard(kRunDirEnv);
    unsetenv(kRunDirEnv);
    EXPECT_EQ(resolve_run_root(std::nullopt), "runs");
    EXPECT_EQ(resolve_run_root(std::string("/x/cli")), "/x/cli");
    setenv(kRunDirEnv, "/x/env", 1);
    EXPECT_EQ(resolve_run_root(std::string("/x/cli")), "/x/env");
}

TEST(RunRoot, CreatesSequentialDirectories)
{
    csipos::testing::TempDir dir("root");
    const std::string a = create_run_dir(dir.path().string());
    const std::string b = create_run_dir(dir.path().string());
    EXPECT_NE(a, b);
    EXPECT_TRUE(fs::is_directory(a));
    EXPECT_TRUE(fs::is_directory(b));
}

class PipelineFixture : public ::testing::Test {
  protected:
    static void SetUpTestSuite()
    {
        root_ = new csipos::testing::TempDir("pipeline");
        RunOptions opt;
        opt.run_root = root_->path().string();
        first_ = run_pipeline(kTiny, opt);
        second_ = run_pipeline(kTiny, opt);
    }
    static void TearDownTestSuite()
    {
        delete root_;
        root_ = nullptr;
    }

    static csipos::testing::TempDir *root_;
    static ExperimentManifest first_;
    static ExperimentManifest second_;
};

csipos::testing::TempDir *PipelineFixture::root_ = nullptr;
ExperimentManifest PipelineFixture::first_;
ExperimentManifest PipelineFixture::second_;

TEST_F(PipelineFixture, RunsAreReproducible)
{
    EXPECT_NE(first_.run_dir, second_.run_dir);
    EXPECT_EQ(first_.dataset_hash.size(), 64u);
    EXPECT_EQ(first_.dataset_hash, second_.dataset_hash);
    EXPECT_EQ(first_.checkpoint_hashes, second_.checkpoint_hashes);
    const std::string s1 = slurp(first_.run_dir + "/summary.csv");
    EXPECT_FALSE(s1.empty());
    EXPECT_EQ(s1, slurp(second_.run_dir + "/summary.csv"));
}

TEST_F(PipelineFixture, ManifestListsHashedArtifacts)
{
    const std::string mpath = first_.run_dir + "/manifest.json";
    ASSERT_TRUE(fs::exists(mpath));
    EXPECT_TRUE(verify_manifest(mpath).empty());
    EXPECT_FALSE(first_.artifacts.empty());
    for (const auto &a : first_.artifacts) {
        EXPECT_EQ(a.sha256.size(), 64u) << a.path;
        EXPECT_TRUE(fs::exists(first_.run_dir + "/" + a.path)) << a.path;
    }
    EXPECT_FALSE(first_.checkpoint_hashes.empty());
}

TEST_F(PipelineFixture, TamperingIsDetected)
{
    csipos::testing::TempDir copy("tamper");
    fs::copy(second_.run_dir, copy.path(), fs::copy_options::recursive);
    const std::string mpath = copy.file("manifest.json");
    ASSERT_TRUE(verify_manifest(mpath).empty());
    {
        std::ofstream out(copy.file("summary.csv"), std::ios::app);
        out << "extra\n";
    }
    const auto problems = verify_manifest(mpath);
    ASSERT_FALSE(problems.empty());
    EXPECT_TRUE(any_contains(problems, "summary.csv"));
}

TEST_F(PipelineFixture, RerunLeavesPriorRunUntouched)
{
    const std::string before = slurp(first_.run_dir + "/manifest.json");
    RunOptions opt;
    opt.run_root = root_->path().string();
    const auto third = run_pipeline(kTiny, opt);
    EXPECT_NE(third.run_dir, first_.run_dir);
    EXPECT_EQ(slurp(first_.run_dir + "/manifest.json"), before);
    EXPECT_TRUE(verify_manifest(first_.run_dir + "/manifest.json").empty());
}

TEST_F(PipelineFixture, SeedOverrideChangesData)
{
    RunOptions opt;
    opt.run_root = root_->path().string();
    opt.seed = 99;
    const auto other = run_pipeline(kTiny, opt);
    EXPECT_EQ(other.seed, 99u);
    EXPECT_NE(other.dataset_hash, first_.dataset_hash);
}

#ifdef CSIPOS_CLI_PATH
namespace {

int run_cli(const std::string &args)
{
    const std::string cmd = std::string("\"") + CSIPOS_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Cli, ExitCodes)
{
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("--version"), 0);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("validate --config \"" + kTiny + "\""), 0);
    csipos::testing::TempDir dir("cli");
    write_text(dir.file("bad.json"), R"({"semi": {"r": -1}})");
    EXPECT_EQ(run_cli("validate --config \"" + dir.file("bad.json") + "\""), 2);
    EXPECT_NE(run_cli("eval --ckpt \"" + dir.file("none.ckpt") + "\" --data \"" + dir.file("none.bin") + "\""), 0);
}

TEST(Cli, StageChain)
{
    csipos::testing::TempDir dir("chain");
    const std::string cfg = "\"" + kTiny + "\"";
    const std::string data = "\"" + dir.file("d.bin") + "\"";
    ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + data), 0);
    ASSERT_EQ(run_cli("preprocess --data " + data + " --out \"" + dir.file("f.bin") + "\" --delay-taps 8"), 0);
    ASSERT_EQ(run_cli("train --data " + data + " --config " + cfg + " --out \"" + dir.file("s1.ckpt") + "\""), 0);
    ASSERT_EQ(run_cli("semi --data " + data + " --config " + cfg + " --out \"" + dir.file("s3.ckpt") + "\""), 0);
    ASSERT_EQ(run_cli("eval --ckpt \"" + dir.file("s3.ckpt") + "\" --data " + data + " --summary \"" +
                      dir.file("sum.csv") + "\""),
              0);
    EXPECT_TRUE(fs::exists(dir.file("f.bin")));
    EXPECT_FALSE(slurp(dir.file("sum.csv")).empty());
}
#endif

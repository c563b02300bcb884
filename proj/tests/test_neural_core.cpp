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
#include "csipos/nn/model.hpp"
#include "csipos/nn/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

using namespace csipos;
using namespace csipos::nn;
using csipos::testing::TempDir;

namespace {

ModelConfig linear_config(std::size_t in, std::size_t out)
{
    ModelConfig c;
    c.input = {in, 1, 1};
    c.head = {{LayerKind::dense, out, 3, 2, Activation::none}};
    return c;
}

ModelConfig small_cnn(std::uint64_t seed = 3)
{
    ModelConfig c = default_backbone_config({2, 8, 8}, 1, 4, 2, 16);
    c.init_seed = seed;
    return c;
}

Batch<float> random_batch(const Shape &s, std::size_t n, std::uint64_t seed)
{
    Batch<float> b;
    b.resize(n, s);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto &v : b.data)
        v = u(rng);
    return b;
}

std::vector<float> run(const Model<float> &m, const Batch<float> &in)
{
    Workspace<float> ws;
    Batch<float> out;
    m.forward(in, {}, out, ws);
    return {out.data.begin(), out.data.end()};
}

} // namespace

TEST(Forward, ZeroWeightsGiveZero)
{
    Model<float> m(small_cnn());
    std::fill(m.params().begin(), m.params().end(), 0.0f);
    for (float v : run(m, random_batch(m.config().input, 4, 1)))
        EXPECT_EQ(v, 0.0f);
}

TEST(Forward, IdentityLinearLayer)
{
    Model<float> m(linear_config(2, 2));
    // Dense layout: weights [out][in] then bias.
    auto p = m.params();
    ASSERT_EQ(p.size(), 6u);
    const float ident[6] = {1, 0, 0, 1, 0, 0};
    std::copy(ident, ident + 6, p.begin());
    Batch<float> in;
    in.resize(1, {2, 1, 1});
    in.data = {3.0f, 4.0f};
    EXPECT_EQ(run(m, in), (std::vector<float>{3.0f, 4.0f}));
}

TEST(Forward, DeterministicAndFinite)
{
    Model<float> m(small_cnn());
    const auto in = random_batch(m.config().input, 8, 2);
    const auto a = run(m, in), b = run(m, in);
    EXPECT_EQ(a, b);
    for (float v : a)
        EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, ShapeMismatchNamesLayer)
{
    ModelConfig c = small_cnn();
    // 8x8 halves to 1x1 after three pools; the fourth cannot apply.
    for (int i = 0; i < 4; ++i)
        c.backbone.insert(c.backbone.begin(), {LayerKind::maxpool, 0, 3, 2, Activation::none});
    try {
        Model<float> m(c);
        FAIL() << "expected an error";
    } catch (const std::exception &e) {
        EXPECT_NE(std::string(e.what()).find("backbone[3]"), std::string::npos) << e.what();
    }
    Model<float> m(small_cnn());
    Batch<float> wrong = random_batch({2, 8, 7}, 1, 1);
    Workspace<float> ws;
    Batch<float> out;
    EXPECT_ANY_THROW(m.forward(wrong, {}, out, ws));
}

TEST(BackwardAndStep, PerfectPredictionHasZeroLossAndGradient)
{
    Model<double> m(linear_config(3, 2));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (auto &p : m.params())
        p = g(rng);
    Batch<double> in;
    in.resize(4, {3, 1, 1});
    for (auto &v : in.data)
        v = g(rng);
    Workspace<double> ws;
    Batch<double> pred, grad_out;
    m.forward(in, {}, pred, ws);
    const std::vector<double> targets(pred.data.begin(), pred.data.end());
    EXPECT_EQ(mse_loss<double>(pred, targets, {}, grad_out), 0.0);
    std::vector<double> grad(m.param_count(), 0.0);
    m.backward(ws, grad_out, grad);
    for (double v : grad)
        EXPECT_EQ(v, 0.0);
}

TEST(BackwardAndStep, ScalarSgdStep)
{
    Model<double> m(linear_config(1, 1));
    m.params()[0] = 2.0;
    m.params()[1] = 0.0;
    OptimizerConfig oc;
    oc.kind = OptimizerKind::sgd;
    oc.lr = 0.1;
    Optimizer<double> opt(oc);
    Batch<double> in;
    in.resize(1, {1, 1, 1});
    in.data = {1.0};
    Workspace<double> ws;
    const std::vector<double> target{0.0};
    const double loss = backward_and_step<double>(m, opt, in, {}, target, {}, ws);
    EXPECT_DOUBLE_EQ(loss, 4.0);
    EXPECT_NEAR(m.params()[0], 1.6, 1e-15);
}

TEST(BackwardAndStep, NonFiniteLossIsReported)
{
    Model<double> m(linear_config(1, 1));
    m.params()[0] = std::numeric_limits<double>::infinity();
    Optimizer<double> opt;
    Batch<double> in;
    in.resize(1, {1, 1, 1});
    in.data = {1.0};
    Workspace<double> ws;
    const std::vector<double> target{0.0};
    try {
        backward_and_step<double>(m, opt, in, {}, target, {}, ws);
        FAIL() << "expected NumericError";
    } catch (const NumericError &e) {
        EXPECT_NE(std::string(e.what()).find("head0"), std::string::npos) << e.what();
    }
}

TEST(GradientCheck, AllLayerKinds)
{
    for (const auto &[name, cfg] : oracle::gradient_check_models()) {
        for (std::uint64_t seed : {1u, 2u}) {
            const auto r = oracle::gradient_check(cfg, seed);
            EXPECT_GT(r.checked, 0u);
            EXPECT_LT(r.max_rel_error, 1e-4) << name << " seed " << seed;
        }
    }
}

TEST(Training, LinearToyConverges)
{
    // y = A x + c, 100 samples, plain SGD.
    const std::size_t n = 100;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<double> xs(n * 3), targets(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 3; ++k)
            xs[i * 3 + k] = g(rng);
        targets[i * 2] = 1.5 * xs[i * 3] - 0.5 * xs[i * 3 + 2] + 0.3;
        targets[i * 2 + 1] = -xs[i * 3 + 1] + 0.8 * xs[i * 3 + 2];
    }
    TrainData<double> data;
    data.size = n;
    data.targets = targets;
    data.input = [&](std::size_t i, std::size_t, std::span<double> dst) {
        std::copy(xs.begin() + i * 3, xs.begin() + i * 3 + 3, dst.begin());
    };
    Model<double> m(linear_config(3, 2));
    auto mse = [&]() {
        auto p = predict<double>(m, n, [&](std::size_t i, std::span<double> dst) { data.input(i, 0, dst); });
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            acc += (p[i] - targets[i]) * (p[i] - targets[i]);
        return acc / double(n);
    };
    const double before = mse();
    OptimizerConfig oc;
    oc.kind = OptimizerKind::sgd;
    oc.lr = 0.05;
    Optimizer<double> opt(oc);
    TrainOptions to;
    to.batch_size = 50;
    to.epochs = 100; // 200 steps
    std::uint64_t steps = 0;
    train(m, opt, data, to, steps);
    EXPECT_EQ(steps, 200u);
    EXPECT_LT(mse(), 0.01 * before);
}

TEST(Training, SameSeedSameWeights)
{
    auto once = [](std::uint64_t seed) {
        Model<float> m(small_cnn());
        Optimizer<float> opt;
        TrainData<float> data;
        data.size = 40;
        data.input = [](std::size_t i, std::size_t, std::span<float> dst) {
            for (std::size_t k = 0; k < dst.size(); ++k)
                dst[k] = float((i * 31 + k * 7) % 13) / 13.0f;
        };
        for (std::size_t i = 0; i < 40; ++i) {
            data.targets.push_back(double(i % 5));
            data.targets.push_back(double(i % 3));
        }
        TrainOptions to;
        to.epochs = 3;
        to.batch_size = 8;
        to.seed = seed;
        std::uint64_t steps = 0;
        train(m, opt, data, to, steps);
        return std::vector<float>(m.params().begin(), m.params().end());
    };
    EXPECT_EQ(once(5), once(5));
    EXPECT_NE(once(5), once(6));
}

TEST(Optimizer, AdamFirstStepIsLrTimesSign)
{
    OptimizerConfig oc;
    oc.lr = 0.01;
    Optimizer<double> opt(oc);
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 1e-3};
    opt.step(p, g);
    EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
    EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
    EXPECT_EQ(opt.state().t, 1u);
}

TEST(ModelConfigJson, RoundTripAndHash)
{
    const ModelConfig c = small_cnn(9);
    Diagnostics diag;
    const ModelConfig back = model_config_from_json(model_config_to_json(c), "model", diag);
    EXPECT_TRUE(diag.empty());
    EXPECT_EQ(back, c);
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(config_hash(small_cnn(1)), config_hash(small_cnn(2)));
    ModelConfig wider = c;
    wider.backbone[0].units += 1;
    EXPECT_NE(config_hash(wider), config_hash(c));
    EXPECT_TRUE(check_model_config(c).empty());
}

TEST(CheckpointIo, RoundTripIsBitIdentical)
{
    TempDir dir("ckpt");
    Model<float> m(small_cnn());
    Optimizer<float> opt;
    // Move the optimizer state off zero.
    std::vector<float> grad(m.param_count(), 0.01f);
    opt.step(m.params(), grad);
    Checkpoint ck = make_checkpoint(m, opt, 17, "stage1", "abc");
    ck.extra["note"] = "x";
    save_checkpoint(ck, dir.file("m.ckpt"));
    const Checkpoint back = load_checkpoint(dir.file("m.ckpt"), m.config());
    EXPECT_EQ(back.step, 17u);
    EXPECT_EQ(back.stage, "stage1");
    EXPECT_EQ(back.dataset_hash, "abc");
    EXPECT_EQ(back.extra, ck.extra);
    EXPECT_EQ(back.optimizer_t, 1u);
    EXPECT_EQ(back.optimizer_m, ck.optimizer_m);
    EXPECT_EQ(checkpoint_hash(back), checkpoint_hash(ck));

    const Model<float> restored = restore_model(back);
    const auto in = random_batch(m.config().input, 100, 6);
    EXPECT_EQ(run(restored, in), run(m, in));
}

TEST(CheckpointIo, HeaderLayout)
{
    Model<float> m(small_cnn());
    std::ostringstream os;
    save_checkpoint(make_checkpoint(m, Optimizer<float>(), 5, "s", ""), os);
    const std::string b = os.str();
    EXPECT_EQ(b.substr(0, 4), "CPNN");
    std::uint32_t version = 0;
    std::memcpy(&version, b.data() + 4, 4);
    EXPECT_EQ(version, Checkpoint::kVersion);
    EXPECT_EQ(b.substr(8, 64), config_hash(m.config()));
    EXPECT_EQ(b.substr(b.size() - 4), "NNPC");
}

TEST(CheckpointIo, WrongConfigAndDamagedFiles)
{
    TempDir dir("ckpt");
    Model<float> m(small_cnn());
    save_checkpoint(make_checkpoint(m, Optimizer<float>(), 1, "s", ""), dir.file("m.ckpt"));
    ModelConfig other = small_cnn();
    other.backbone[0].units = 5;
    EXPECT_THROW(load_checkpoint(dir.file("m.ckpt"), other), FormatError);

    std::ifstream f(dir.file("m.ckpt"), std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::istringstream cut(bytes.substr(0, bytes.size() - 10));
    EXPECT_THROW(load_checkpoint(cut), FormatError);
    std::istringstream trailing(bytes + "junk");
    EXPECT_THROW(load_checkpoint(trailing), FormatError);
    std::string corrupt = bytes;
    corrupt[corrupt.size() - 2] = 'X';
    std::istringstream bad_end(corrupt);
    EXPECT_THROW(load_checkpoint(bad_end), FormatError);
}

TEST(CheckpointIo, ResumedTrainingMatchesUninterrupted)
{
    TrainData<float> data;
    data.size = 24;
    data.input = [](std::size_t i, std::size_t, std::span<float> dst) {
        for (std::size_t k = 0; k < dst.size(); ++k)
            dst[k] = float((i * 17 + k) % 11) / 11.0f;
    };
    for (std::size_t i = 0; i < 24; ++i) {
        data.targets.push_back(double(i % 4));
        data.targets.push_back(1.0);
    }
    TrainOptions to;
    to.epochs = 1;
    to.batch_size = 8;

    Model<float> a(small_cnn());
    Optimizer<float> oa;
    std::uint64_t sa = 0;
    train(a, oa, data, to, sa);
    const Checkpoint mem = make_checkpoint(a, oa, sa, "s", "");
    std::ostringstream os;
    save_checkpoint(mem, os);
    Model<float> c = restore_model(mem);
    Optimizer<float> oc = restore_optimizer(mem);
    train(c, oc, data, to, sa);

    std::istringstream is(os.str());
    const Checkpoint ck = load_checkpoint(is);
    Model<float> b = restore_model(ck);
    Optimizer<float> ob = restore_optimizer(ck);
    std::uint64_t sb = ck.step;
    train(b, ob, data, to, sb);
    EXPECT_EQ(sb, sa);
    EXPECT_TRUE(std::equal(c.params().begin(), c.params().end(), b.params().begin()));
}

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

#include "csipos/nn/train.hpp"

#include "csipos/common.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace csipos::nn {

template <typename T> void Optimizer<T>::step(std::span<T> params, std::span<const T> grad)
{
    const std::size_t n = params.size();
    if (grad.size() != n)
        throw NumericError("optimizer: gradient size mismatch");
    if (state_.m.size() != n)
        state_.m.assign(n, 0.0);
    ++state_.t;
    const double lr = config_.lr;

    if (config_.kind == OptimizerKind::sgd) {
        const double mu = config_.momentum;
        for (std::size_t i = 0; i < n; ++i) {
            double g = static_cast<double>(grad[i]);
            if (mu != 0.0) {
                state_.m[i] = mu * state_.m[i] + g;
                g = state_.m[i];
            }
            params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * g);
        }
        return;
    }

    if (state_.v.size() != n)
        state_.v.assign(n, 0.0);
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grad[i]);
        state_.m[i] = b1 * state_.m[i] + (1.0 - b1) * g;
        state_.v[i] = b2 * state_.v[i] + (1.0 - b2) * g * g;
        const double mhat = state_.m[i] / c1;
        const double vhat = state_.v[i] / c2;
        params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
}

json train_options_to_json(const TrainOptions &o)
{
    json j;
    j["epochs"] = o.epochs;
    j["batch_size"] = o.batch_size;
    j["optimizer"] = o.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd";
    j["lr"] = o.optimizer.lr;
    j["momentum"] = o.optimizer.momentum;
    j["beta1"] = o.optimizer.beta1;
    j["beta2"] = o.optimizer.beta2;
    j["eps"] = o.optimizer.eps;
    j["noise_rel"] = o.noise_rel;
    j["seed"] = o.seed;
    return j;
}

TrainOptions train_options_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    TrainOptions o;
    ConfigReader r(node, path, diag);
    r.read("epochs", o.epochs);
    r.read("batch_size", o.batch_size);
    std::string kind = o.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd";
    r.read("optimizer", kind);
    if (kind == "adam")
        o.optimizer.kind = OptimizerKind::adam;
    else if (kind == "sgd")
        o.optimizer.kind = OptimizerKind::sgd;
    else
        r.error("optimizer", "unknown optimizer '" + kind + "' (adam, sgd)");
    r.read("lr", o.optimizer.lr);
    r.read("momentum", o.optimizer.momentum);
    r.read("beta1", o.optimizer.beta1);
    r.read("beta2", o.optimizer.beta2);
    r.read("eps", o.optimizer.eps);
    r.read("noise_rel", o.noise_rel);
    r.read("seed", o.seed);
    r.finish();
    return o;
}

Diagnostics check_train_options(const TrainOptions &o, const std::string &path)
{
    Diagnostics d;
    auto key = [&](const char *k) { return path.empty() ? std::string(k) : path + "." + k; };
    if (o.batch_size < 1)
        d.push_back(key("batch_size") + ": must be >= 1");
    if (!(o.optimizer.lr > 0.0) || !std::isfinite(o.optimizer.lr))
        d.push_back(key("lr") + ": must be positive");
    if (o.optimizer.momentum < 0.0 || o.optimizer.momentum >= 1.0)
        d.push_back(key("momentum") + ": must be in [0, 1)");
    if (o.optimizer.beta1 < 0.0 || o.optimizer.beta1 >= 1.0 || o.optimizer.beta2 < 0.0 || o.optimizer.beta2 >= 1.0)
        d.push_back(key("beta1") + ": adam betas must be in [0, 1)");
    if (!(o.optimizer.eps > 0.0))
        d.push_back(key("eps") + ": must be positive");
    if (!(o.noise_rel >= 0.0) || !std::isfinite(o.noise_rel))
        d.push_back(key("noise_rel") + ": must be finite and non-negative");
    return d;
}

template <typename T>
double mse_loss(const Batch<T> &pred, std::span<const double> targets_raw, std::span<const double> weights,
                Batch<T> &grad)
{
    const std::size_t n = pred.n, D = pred.shape.size();
    if (targets_raw.size() != n * D)
        throw NumericError("mse_loss: target count does not match predictions");
    if (!weights.empty() && weights.size() != n)
        throw NumericError("mse_loss: weight count does not match predictions");
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        wsum += weights.empty() ? 1.0 : weights[i];
    grad.resize(n, pred.shape);
    if (!(wsum > 0.0)) {
        grad.zero();
        return 0.0;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        for (std::size_t d = 0; d < D; ++d) {
            const double r = static_cast<double>(pred.data[i * D + d]) - targets_raw[i * D + d];
            loss += w * r * r;
            grad.data[i * D + d] = static_cast<T>(2.0 * w * r / wsum);
        }
    }
    return loss / wsum;
}

template <typename T>
double backward_and_step(Model<T> &model, Optimizer<T> &opt, const Batch<T> &inputs, std::span<const std::uint8_t> heads,
                         std::span<const double> targets_raw, std::span<const double> weights, Workspace<T> &ws)
{
    if (inputs.n == 0)
        throw NumericError("backward_and_step: empty batch");
    Batch<T> pred, grad_out;
    model.forward(inputs, heads, pred, ws);
    const double loss = mse_loss(pred, targets_raw, weights, grad_out);
    if (!std::isfinite(loss))
        throw NumericError("non-finite training loss (" + std::to_string(loss) + "); parameter norms:\n" +
                           model.describe_param_norms());
    AlignedVector<T> grad(model.param_count(), T(0));
    model.backward(ws, grad_out, grad);
    opt.step(model.params(), grad);
    return loss;
}

template <typename T>
TrainHistory train(Model<T> &model, Optimizer<T> &opt, const TrainData<T> &data, const TrainOptions &opts,
                   std::uint64_t &step_counter)
{
    TrainHistory hist;
    if (data.size == 0)
        throw NumericError("train: no training examples");
    const std::size_t D = model.output_dim();
    if (data.targets.size() != data.size * D)
        throw NumericError("train: expected " + std::to_string(data.size * D) + " target values, got " +
                           std::to_string(data.targets.size()));
    for (double t : data.targets)
        if (!std::isfinite(t))
            throw NumericError("train: non-finite target");

    std::vector<double> raw_targets(data.targets.size());
    for (std::size_t i = 0; i < data.size; ++i)
        for (std::size_t d = 0; d < D; ++d)
            raw_targets[i * D + d] = model.to_raw(data.targets[i * D + d], d);

    const Shape in_shape = model.config().input;
    const std::size_t B = std::max<std::size_t>(1, opts.batch_size);
    std::vector<std::size_t> order(data.size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Workspace<T> ws;
    Batch<T> batch;
    std::vector<std::uint8_t> heads;
    std::vector<double> targets, weights;

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        auto rng = make_rng(opts.seed, RngStream::shuffle, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < data.size; start += B) {
            const std::size_t count = std::min(B, data.size - start);
            batch.resize(count, in_shape);
            heads.clear();
            targets.clear();
            weights.clear();
            parallel_for(count, [&](std::size_t r) { data.input(order[start + r], epoch, batch.sample(r)); });
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t i = order[start + r];
                if (!data.heads.empty())
                    heads.push_back(data.heads[i]);
                if (!data.weights.empty())
                    weights.push_back(data.weights[i]);
                for (std::size_t d = 0; d < D; ++d)
                    targets.push_back(raw_targets[i * D + d]);
            }
            loss_sum += backward_and_step(model, opt, batch, heads, targets, weights, ws);
            ++batches;
            ++hist.steps;
            ++step_counter;
        }
        hist.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        if (opts.verbose)
            std::cerr << "  epoch " << epoch + 1 << "/" << opts.epochs << " loss " << hist.epoch_loss.back() << "\n";
    }
    return hist;
}

template <typename T>
std::vector<double> predict(const Model<T> &model, std::size_t n, const std::function<void(std::size_t, std::span<T>)> &input,
                            std::span<const std::uint8_t> heads, std::size_t batch_size)
{
    const std::size_t D = model.output_dim();
    std::vector<double> out(n * D);
    Workspace<T> ws;
    Batch<T> batch, pred;
    const std::size_t B = std::max<std::size_t>(1, batch_size);
    for (std::size_t start = 0; start < n; start += B) {
        const std::size_t count = std::min(B, n - start);
        batch.resize(count, model.config().input);
        parallel_for(count, [&](std::size_t r) { input(start + r, batch.sample(r)); });
        const auto h = heads.empty() ? std::span<const std::uint8_t>{} : heads.subspan(start, count);
        model.forward(batch, h, pred, ws);
        for (std::size_t r = 0; r < count; ++r)
            for (std::size_t d = 0; d < D; ++d)
                out[(start + r) * D + d] = model.to_output(static_cast<double>(pred.data[r * D + d]), d);
    }
    return out;
}

template class Optimizer<float>;
template class Optimizer<double>;
template double mse_loss<float>(const Batch<float> &, std::span<const double>, std::span<const double>, Batch<float> &);
template double mse_loss<double>(const Batch<double> &, std::span<const double>, std::span<const double>,
                                 Batch<double> &);
template double backward_and_step<float>(Model<float> &, Optimizer<float> &, const Batch<float> &,
                                         std::span<const std::uint8_t>, std::span<const double>,
                                         std::span<const double>, Workspace<float> &);
template double backward_and_step<double>(Model<double> &, Optimizer<double> &, const Batch<double> &,
                                          std::span<const std::uint8_t>, std::span<const double>,
                                          std::span<const double>, Workspace<double> &);
template TrainHistory train<float>(Model<float> &, Optimizer<float> &, const TrainData<float> &, const TrainOptions &,
                                   std::uint64_t &);
template TrainHistory train<double>(Model<double> &, Optimizer<double> &, const TrainData<double> &,
                                    const TrainOptions &, std::uint64_t &);
template std::vector<double> predict<float>(const Model<float> &, std::size_t,
                                            const std::function<void(std::size_t, std::span<float>)> &,
                                            std::span<const std::uint8_t>, std::size_t);
template std::vector<double> predict<double>(const Model<double> &, std::size_t,
                                             const std::function<void(std::size_t, std::span<double>)> &,
                                             std::span<const std::uint8_t>, std::size_t);

} // namespace csipos::nn

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

#include "csipos/nn/layers.hpp"

#include "csipos/common.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace csipos::nn {

std::string to_string(const Shape &s)
{
    return "[" + std::to_string(s.c) + " x " + std::to_string(s.h) + " x " + std::to_string(s.w) + "]";
}

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv:
        return "conv";
    case LayerKind::maxpool:
        return "maxpool";
    case LayerKind::avgpool:
        return "avgpool";
    case LayerKind::dense:
        return "dense";
    }
    return "?";
}

std::string to_string(Activation act)
{
    switch (act) {
    case Activation::none:
        return "none";
    case Activation::relu:
        return "relu";
    case Activation::tanh:
        return "tanh";
    }
    return "?";
}

namespace {

template <typename T> using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MapMat = Eigen::Map<RowMat<T>>;
template <typename T> using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T> using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T> using ConstMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T> void activate(Activation act, std::span<T> v)
{
    switch (act) {
    case Activation::none:
        break;
    case Activation::relu:
        for (auto &x : v)
            x = x > T(0) ? x : T(0);
        break;
    case Activation::tanh:
        for (auto &x : v)
            x = std::tanh(x);
        break;
    }
}

// grad <- grad * act'(pre), expressed through the activation output.
template <typename T> void activation_backward(Activation act, std::span<const T> out, std::span<T> grad)
{
    switch (act) {
    case Activation::none:
        break;
    case Activation::relu:
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (!(out[i] > T(0)))
                grad[i] = T(0);
        break;
    case Activation::tanh:
        for (std::size_t i = 0; i < grad.size(); ++i)
            grad[i] *= T(1) - out[i] * out[i];
        break;
    }
}

template <typename T> void kaiming_init(std::span<T> weights, std::size_t fan_in, Activation act, std::mt19937_64 &rng)
{
    const double gain = act == Activation::relu ? 2.0 : 1.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
    for (auto &w : weights)
        w = static_cast<T>(dist(rng));
}

// 2D convolution, stride 1, zero "same" padding, odd square kernel.
template <typename T> class Conv2D final : public Layer<T> {
  public:
    Conv2D(const Shape &in, std::size_t out_channels, std::size_t kernel, Activation act)
        : in_(in), out_channels_(out_channels), k_(kernel), act_(act)
    {
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return {out_channels_, in_.h, in_.w}; }
    std::size_t param_count() const override { return out_channels_ * patch() + out_channels_; }
    std::vector<std::pair<std::string, std::size_t>> param_layout() const override
    {
        return {{"weight", out_channels_ * patch()}, {"bias", out_channels_}};
    }
    void init_params(std::span<T> p, std::mt19937_64 &rng) const override
    {
        kaiming_init(p.subspan(0, out_channels_ * patch()), patch(), act_, rng);
        std::fill(p.begin() + static_cast<std::ptrdiff_t>(out_channels_ * patch()), p.end(), T(0));
    }

    void forward(std::span<const T> params, const Batch<T> &in, Batch<T> &out, LayerScratch &scratch) const override
    {
        const std::size_t hw = in_.h * in_.w;
        out.resize(in.n, output_shape());
        auto &cols = scratch.buffer<T>();
        cols.resize(in.n * patch() * hw);
        ConstMapMat<T> W(params.data(), out_channels_, patch());
        ConstMapVec<T> bias(params.data() + out_channels_ * patch(), out_channels_);
        for (std::size_t n = 0; n < in.n; ++n) {
            T *col = cols.data() + n * patch() * hw;
            im2col(in.sample(n).data(), col);
            MapMat<T> Y(out.sample(n).data(), out_channels_, hw);
            Y.noalias() = W * ConstMapMat<T>(col, patch(), hw);
            Y.colwise() += bias;
        }
        activate(act_, std::span<T>(out.data));
    }

    void backward(std::span<const T> params, const Batch<T> &in, const Batch<T> &out, Batch<T> &grad_out,
                  Batch<T> *grad_in, std::span<T> grad_params, LayerScratch &scratch) const override
    {
        const std::size_t hw = in_.h * in_.w;
        activation_backward(act_, std::span<const T>(out.data), std::span<T>(grad_out.data));
        const auto &cols = scratch.buffer<T>();
        ConstMapMat<T> W(params.data(), out_channels_, patch());
        MapMat<T> gW(grad_params.data(), out_channels_, patch());
        MapVec<T> gb(grad_params.data() + out_channels_ * patch(), out_channels_);
        if (grad_in) {
            grad_in->resize(in.n, in_);
            grad_in->zero();
        }
        RowMat<T> gcol(patch(), hw);
        for (std::size_t n = 0; n < in.n; ++n) {
            ConstMapMat<T> G(grad_out.sample(n).data(), out_channels_, hw);
            ConstMapMat<T> col(cols.data() + n * patch() * hw, patch(), hw);
            gW.noalias() += G * col.transpose();
            gb += G.rowwise().sum();
            if (grad_in) {
                gcol.noalias() = W.transpose() * G;
                col2im(gcol.data(), grad_in->sample(n).data());
            }
        }
    }

  private:
    std::size_t patch() const { return in_.c * k_ * k_; }

    void im2col(const T *src, T *col) const
    {
        const long pad = static_cast<long>(k_ / 2);
        const long H = static_cast<long>(in_.h), Wd = static_cast<long>(in_.w);
        std::size_t row = 0;
        for (std::size_t c = 0; c < in_.c; ++c)
            for (std::size_t ky = 0; ky < k_; ++ky)
                for (std::size_t kx = 0; kx < k_; ++kx, ++row) {
                    T *dst = col + row * in_.h * in_.w;
                    const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
                    for (long y = 0; y < H; ++y) {
                        const long sy = y + dy;
                        for (long x = 0; x < Wd; ++x) {
                            const long sx = x + dx;
                            dst[y * Wd + x] = (sy >= 0 && sy < H && sx >= 0 && sx < Wd)
                                                  ? src[(static_cast<long>(c) * H + sy) * Wd + sx]
                                                  : T(0);
                        }
                    }
                }
    }

    void col2im(const T *col, T *dst) const
    {
        const long pad = static_cast<long>(k_ / 2);
        const long H = static_cast<long>(in_.h), Wd = static_cast<long>(in_.w);
        std::size_t row = 0;
        for (std::size_t c = 0; c < in_.c; ++c)
            for (std::size_t ky = 0; ky < k_; ++ky)
                for (std::size_t kx = 0; kx < k_; ++kx, ++row) {
                    const T *src = col + row * in_.h * in_.w;
                    const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
                    for (long y = 0; y < H; ++y) {
                        const long sy = y + dy;
                        if (sy < 0 || sy >= H)
                            continue;
                        for (long x = 0; x < Wd; ++x) {
                            const long sx = x + dx;
                            if (sx >= 0 && sx < Wd)
                                dst[(static_cast<long>(c) * H + sy) * Wd + sx] += src[y * Wd + x];
                        }
                    }
                }
    }

    Shape in_;
    std::size_t out_channels_;
    std::size_t k_;
    Activation act_;
};

template <typename T> class Pool2D final : public Layer<T> {
  public:
    Pool2D(const Shape &in, std::size_t window, bool max) : in_(in), p_(window), max_(max) {}

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return {in_.c, in_.h / p_, in_.w / p_}; }

    void forward(std::span<const T>, const Batch<T> &in, Batch<T> &out, LayerScratch &scratch) const override
    {
        const Shape os = output_shape();
        out.resize(in.n, os);
        if (max_)
            scratch.index.resize(in.n * os.size());
        const T inv = T(1) / static_cast<T>(p_ * p_);
        for (std::size_t n = 0; n < in.n; ++n) {
            const T *src = in.sample(n).data();
            T *dst = out.sample(n).data();
            for (std::size_t c = 0; c < in_.c; ++c)
                for (std::size_t y = 0; y < os.h; ++y)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const std::size_t o = (c * os.h + y) * os.w + x;
                        T best = -std::numeric_limits<T>::infinity();
                        std::uint32_t arg = 0;
                        T sum = T(0);
                        for (std::size_t py = 0; py < p_; ++py)
                            for (std::size_t px = 0; px < p_; ++px) {
                                const std::size_t i = (c * in_.h + y * p_ + py) * in_.w + x * p_ + px;
                                sum += src[i];
                                if (src[i] > best) {
                                    best = src[i];
                                    arg = static_cast<std::uint32_t>(i);
                                }
                            }
                        if (max_) {
                            dst[o] = best;
                            scratch.index[n * os.size() + o] = arg;
                        } else {
                            dst[o] = sum * inv;
                        }
                    }
        }
    }

    void backward(std::span<const T>, const Batch<T> &in, const Batch<T> &, Batch<T> &grad_out, Batch<T> *grad_in,
                  std::span<T>, LayerScratch &scratch) const override
    {
        if (!grad_in)
            return;
        const Shape os = output_shape();
        grad_in->resize(in.n, in_);
        grad_in->zero();
        const T inv = T(1) / static_cast<T>(p_ * p_);
        for (std::size_t n = 0; n < in.n; ++n) {
            const T *g = grad_out.sample(n).data();
            T *dst = grad_in->sample(n).data();
            for (std::size_t c = 0; c < in_.c; ++c)
                for (std::size_t y = 0; y < os.h; ++y)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const std::size_t o = (c * os.h + y) * os.w + x;
                        if (max_) {
                            dst[scratch.index[n * os.size() + o]] += g[o];
                        } else {
                            for (std::size_t py = 0; py < p_; ++py)
                                for (std::size_t px = 0; px < p_; ++px)
                                    dst[(c * in_.h + y * p_ + py) * in_.w + x * p_ + px] += g[o] * inv;
                        }
                    }
        }
    }

  private:
    Shape in_;
    std::size_t p_;
    bool max_;
};

template <typename T> class Dense final : public Layer<T> {
  public:
    Dense(const Shape &in, std::size_t units, Activation act) : in_(in), units_(units), act_(act) {}

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return {units_, 1, 1}; }
    std::size_t param_count() const override { return units_ * in_.size() + units_; }
    std::vector<std::pair<std::string, std::size_t>> param_layout() const override
    {
        return {{"weight", units_ * in_.size()}, {"bias", units_}};
    }
    void init_params(std::span<T> p, std::mt19937_64 &rng) const override
    {
        kaiming_init(p.subspan(0, units_ * in_.size()), in_.size(), act_, rng);
        std::fill(p.begin() + static_cast<std::ptrdiff_t>(units_ * in_.size()), p.end(), T(0));
    }

    void forward(std::span<const T> params, const Batch<T> &in, Batch<T> &out, LayerScratch &scratch) const override
    {
        out.resize(in.n, output_shape());
        const std::size_t fin = in_.size();
        ConstMapMat<T> W(params.data(), units_, fin);
        ConstMapVec<T> bias(params.data() + units_ * fin, units_);
        // One matrix-vector product per sample on aligned copies, so a sample's
        // output does not depend on its batch or its position in it.
        auto &buf = scratch.buffer<T>();
        buf.resize(fin + units_);
        MapVec<T> x(buf.data(), fin);
        MapVec<T> y(buf.data() + fin, units_);
        for (std::size_t i = 0; i < in.n; ++i) {
            x = ConstMapVec<T>(in.data.data() + i * fin, fin);
            y.noalias() = W * x;
            MapVec<T>(out.data.data() + i * units_, units_) = y + bias;
        }
        activate(act_, std::span<T>(out.data));
    }

    void backward(std::span<const T> params, const Batch<T> &in, const Batch<T> &out, Batch<T> &grad_out,
                  Batch<T> *grad_in, std::span<T> grad_params, LayerScratch &) const override
    {
        activation_backward(act_, std::span<const T>(out.data), std::span<T>(grad_out.data));
        const std::size_t fin = in_.size();
        ConstMapMat<T> X(in.data.data(), in.n, fin);
        ConstMapMat<T> G(grad_out.data.data(), in.n, units_);
        ConstMapMat<T> W(params.data(), units_, fin);
        MapMat<T> gW(grad_params.data(), units_, fin);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(grad_params.data() + units_ * fin, units_);
        gW.noalias() += G.transpose() * X;
        gb += G.colwise().sum();
        if (grad_in) {
            grad_in->resize(in.n, in_);
            MapMat<T> gX(grad_in->data.data(), in.n, fin);
            gX.noalias() = G * W;
        }
    }

  private:
    Shape in_;
    std::size_t units_;
    Activation act_;
};

} // namespace

template <typename T> std::unique_ptr<Layer<T>> make_layer(const LayerSpec &spec, const Shape &input, const std::string &where)
{
    auto fail = [&](const std::string &msg) -> std::unique_ptr<Layer<T>> {
        throw ConfigError(where + " (" + to_string(spec.kind) + "): " + msg + "; input shape " + to_string(input));
    };
    if (input.size() == 0)
        return fail("empty input");
    switch (spec.kind) {
    case LayerKind::conv:
        if (spec.units == 0)
            return fail("conv needs units >= 1");
        if (spec.kernel == 0 || spec.kernel % 2 == 0)
            return fail("conv kernel must be odd");
        return std::make_unique<Conv2D<T>>(input, spec.units, spec.kernel, spec.activation);
    case LayerKind::maxpool:
    case LayerKind::avgpool:
        if (spec.pool == 0 || input.h < spec.pool || input.w < spec.pool)
            return fail("pool window " + std::to_string(spec.pool) + " does not fit");
        if (spec.activation != Activation::none)
            return fail("pooling takes no activation");
        return std::make_unique<Pool2D<T>>(input, spec.pool, spec.kind == LayerKind::maxpool);
    case LayerKind::dense:
        if (spec.units == 0)
            return fail("dense needs units >= 1");
        return std::make_unique<Dense<T>>(input, spec.units, spec.activation);
    }
    return fail("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec &, const Shape &, const std::string &);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec &, const Shape &, const std::string &);

} // namespace csipos::nn

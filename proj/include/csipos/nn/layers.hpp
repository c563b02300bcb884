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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace csipos::nn {

// Cache-line aligned allocator. Vectorized kernels peel loops according to the
// buffer address, so unaligned storage would make results differ between runs.
template <typename T> struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U> AlignedAllocator(const AlignedAllocator<U> &) noexcept {}

    T *allocate(std::size_t n) { return static_cast<T *>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T *p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U> bool operator==(const AlignedAllocator<U> &) const noexcept { return true; }
};

template <typename T> using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Per-sample activation shape (channels, height, width). Dense activations use (n, 1, 1).
struct Shape {
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t size() const { return c * h * w; }
    friend bool operator==(const Shape &, const Shape &) = default;
};

std::string to_string(const Shape &s);

// A batch of samples with a common shape, stored contiguously sample-major.
template <typename T> struct Batch {
    std::size_t n = 0;
    Shape shape;
    AlignedVector<T> data;

    void resize(std::size_t count, const Shape &s)
    {
        n = count;
        shape = s;
        data.resize(count * s.size());
    }
    void zero() { std::fill(data.begin(), data.end(), T(0)); }
    std::span<T> sample(std::size_t i) { return {data.data() + i * shape.size(), shape.size()}; }
    std::span<const T> sample(std::size_t i) const { return {data.data() + i * shape.size(), shape.size()}; }
};

enum class LayerKind { conv, maxpool, avgpool, dense };
enum class Activation { none, relu, tanh };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t units = 0;  // conv output channels or dense width
    std::size_t kernel = 3; // conv only, odd
    std::size_t pool = 2;   // pooling window and stride
    Activation activation = Activation::none;

    friend bool operator==(const LayerSpec &, const LayerSpec &) = default;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

struct LayerScratch {
    AlignedVector<float> f;
    AlignedVector<double> d;
    std::vector<std::uint32_t> index;

    template <typename T> AlignedVector<T> &buffer()
    {
        if constexpr (std::is_same_v<T, float>)
            return f;
        else
            return d;
    }
};

struct ParamBlob {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
};

template <typename T> class Layer {
  public:
    virtual ~Layer() = default;

    virtual Shape input_shape() const = 0;
    virtual Shape output_shape() const = 0;
    virtual std::size_t param_count() const { return 0; }
    // (name suffix, count) pairs laid out consecutively in the parameter span.
    virtual std::vector<std::pair<std::string, std::size_t>> param_layout() const { return {}; }
    virtual void init_params(std::span<T>, std::mt19937_64 &) const {}

    virtual void forward(std::span<const T> params, const Batch<T> &in, Batch<T> &out, LayerScratch &scratch) const = 0;

    // grad_out holds dL/d(output) and may be overwritten. grad_params is accumulated,
    // grad_in (when non-null) is overwritten.
    virtual void backward(std::span<const T> params, const Batch<T> &in, const Batch<T> &out, Batch<T> &grad_out,
                          Batch<T> *grad_in, std::span<T> grad_params, LayerScratch &scratch) const = 0;
};

// Validates `spec` against `input` and builds the layer; throws ConfigError naming
// `where` when shapes do not compose.
template <typename T> std::unique_ptr<Layer<T>> make_layer(const LayerSpec &spec, const Shape &input, const std::string &where);

} // namespace csipos::nn

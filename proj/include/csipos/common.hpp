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

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace csipos {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2 &, const Vec2 &) = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Vec3 &, const Vec3 &) = default;
};

inline double distance(const Vec2 &a, const Vec2 &b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline double distance(const Vec3 &a, const Vec3 &b)
{
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}
inline Vec2 midpoint(const Vec2 &a, const Vec2 &b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }
inline bool is_finite(const Vec2 &p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Malformed, truncated or mismatching files.
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Numerical failure during training or inference (shape mismatch, non-finite loss).
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Deterministic RNG stream for (seed, stream, index). Results do not depend on
// which thread consumes the stream or in which order.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// Stream tags used with make_rng.
enum class RngStream : std::uint64_t {
    scene = 1,
    receiver = 2,
    labels = 3,
    augment = 4,
    shuffle = 5,
    init = 6,
    noise_eval = 7,
    split = 8,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream, std::uint64_t index = 0)
{
    return make_rng(seed, static_cast<std::uint64_t>(stream), index);
}

// Number of worker threads used by parallel_for; 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous chunks; the body must
// only write to state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace csipos

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

#include "csipos/common.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace csipos {

inline constexpr std::array<int, 4> kReportPercentiles{90, 80, 67, 50};

double error_distance(const Vec2 &pred, const Vec2 &truth);

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value, p in (0, 100].
double percentile(std::span<const double> values, double p);

struct SampleMeta {
    std::uint64_t id = 0;
    bool is_los = true;
    std::uint8_t sector = 0;
};

struct SampleError {
    std::uint64_t id = 0;
    double error_m = 0.0;
    bool is_los = true;
    std::uint8_t sector = 0;
};

struct ErrorSummary {
    std::size_t n = 0;
    double mean_error_m = 0.0;
    std::map<int, double> percentiles;
};

ErrorSummary summarize_errors(std::span<const double> errors);

struct EvalReport {
    std::size_t n = 0;
    double mean_error_m = 0.0;
    std::map<int, double> percentiles;
    std::vector<SampleError> per_sample;
    std::vector<std::pair<double, double>> cdf_points; // (error, cumulative fraction)
    std::optional<ErrorSummary> los;
    std::optional<ErrorSummary> nlos;
    std::map<int, ErrorSummary> per_sector;
};

EvalReport build_report(std::span<const Vec2> predictions, std::span<const Vec2> truths,
                        std::span<const SampleMeta> meta);

// id,error_m,sector,los
void write_report_csv(const EvalReport &report, const std::string &path);
// metric,value
void write_summary_csv(const EvalReport &report, const std::string &path);
// error_m,fraction
void write_cdf_csv(const EvalReport &report, const std::string &path);

std::string format_summary(const EvalReport &report);

} // namespace csipos

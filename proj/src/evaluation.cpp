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

#include "csipos/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace csipos {

double error_distance(const Vec2 &pred, const Vec2 &truth)
{
    if (!is_finite(pred) || !is_finite(truth))
        throw NumericError("error_distance: non-finite coordinate");
    const double dx = pred.x - truth.x, dy = pred.y - truth.y;
    return std::sqrt(dx * dx + dy * dy);
}

double percentile(std::span<const double> values, double p)
{
    if (values.empty())
        throw std::invalid_argument("percentile of an empty list");
    if (!(p > 0.0) || p > 100.0)
        throw std::invalid_argument("percentile level must be in (0, 100]");
    std::vector<double> v(values.begin(), values.end());
    const auto n = static_cast<double>(v.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

ErrorSummary summarize_errors(std::span<const double> errors)
{
    ErrorSummary s;
    s.n = errors.size();
    if (errors.empty())
        return s;
    s.mean_error_m = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    for (int p : kReportPercentiles)
        s.percentiles[p] = percentile(errors, p);
    return s;
}

EvalReport build_report(std::span<const Vec2> predictions, std::span<const Vec2> truths,
                        std::span<const SampleMeta> meta)
{
    if (predictions.size() != truths.size())
        throw std::invalid_argument("build_report: " + std::to_string(predictions.size()) + " predictions but " +
                                    std::to_string(truths.size()) + " ground-truth positions");
    if (!meta.empty() && meta.size() != predictions.size())
        throw std::invalid_argument("build_report: metadata length does not match predictions");
    if (predictions.empty())
        throw std::invalid_argument("build_report: nothing to evaluate");

    EvalReport r;
    r.n = predictions.size();
    std::vector<double> errors(r.n);
    r.per_sample.resize(r.n);
    for (std::size_t i = 0; i < r.n; ++i) {
        errors[i] = error_distance(predictions[i], truths[i]);
        const SampleMeta m = meta.empty() ? SampleMeta{i, true, 0} : meta[i];
        r.per_sample[i] = {m.id, errors[i], m.is_los, m.sector};
    }
    const ErrorSummary all = summarize_errors(errors);
    r.mean_error_m = all.mean_error_m;
    r.percentiles = all.percentiles;

    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    r.cdf_points.reserve(r.n);
    for (std::size_t i = 0; i < r.n; ++i)
        r.cdf_points.emplace_back(sorted[i], static_cast<double>(i + 1) / static_cast<double>(r.n));

    if (!meta.empty()) {
        std::vector<double> los, nlos;
        std::map<int, std::vector<double>> by_sector;
        for (const auto &s : r.per_sample) {
            (s.is_los ? los : nlos).push_back(s.error_m);
            by_sector[s.sector].push_back(s.error_m);
        }
        if (!los.empty())
            r.los = summarize_errors(los);
        if (!nlos.empty())
            r.nlos = summarize_errors(nlos);
        for (const auto &[sector, e] : by_sector)
            r.per_sector[sector] = summarize_errors(e);
    }
    return r;
}

namespace {

std::ofstream open_csv(const std::string &path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << std::setprecision(17);
    return out;
}

void finish_csv(std::ofstream &out, const std::string &path)
{
    out.flush();
    if (!out)
        throw FormatError("failed writing '" + path + "'");
}

void summary_rows(std::ostream &out, const std::string &prefix, const ErrorSummary &s)
{
    out << prefix << "n," << s.n << '\n' << prefix << "mean_error_m," << s.mean_error_m << '\n';
    for (const auto &[p, v] : s.percentiles)
        out << prefix << 'p' << p << "_m," << v << '\n';
}

} // namespace

void write_report_csv(const EvalReport &report, const std::string &path)
{
    auto out = open_csv(path);
    out << "id,error_m,sector,los\n";
    for (const auto &s : report.per_sample)
        out << s.id << ',' << s.error_m << ',' << static_cast<int>(s.sector) << ',' << (s.is_los ? 1 : 0) << '\n';
    finish_csv(out, path);
}

void write_summary_csv(const EvalReport &report, const std::string &path)
{
    auto out = open_csv(path);
    out << "metric,value\n";
    ErrorSummary all{report.n, report.mean_error_m, report.percentiles};
    // Highest percentile first, matching the usual reporting order.
    out << "n," << all.n << "\nmean_error_m," << all.mean_error_m << '\n';
    for (int p : kReportPercentiles)
        if (auto it = report.percentiles.find(p); it != report.percentiles.end())
            out << 'p' << p << "_m," << it->second << '\n';
    if (report.los)
        summary_rows(out, "los_", *report.los);
    if (report.nlos)
        summary_rows(out, "nlos_", *report.nlos);
    for (const auto &[sector, s] : report.per_sector)
        summary_rows(out, "sector" + std::to_string(sector) + "_", s);
    finish_csv(out, path);
}

void write_cdf_csv(const EvalReport &report, const std::string &path)
{
    auto out = open_csv(path);
    out << "error_m,fraction\n";
    for (const auto &[e, f] : report.cdf_points)
        out << e << ',' << f << '\n';
    finish_csv(out, path);
}

std::string format_summary(const EvalReport &report)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << "n=" << report.n << " mean=" << report.mean_error_m << "m";
    for (int p : kReportPercentiles)
        if (auto it = report.percentiles.find(p); it != report.percentiles.end())
            s << " p" << p << "=" << it->second << "m";
    return s.str();
}

} // namespace csipos

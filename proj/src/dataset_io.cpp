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

#include "csipos/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace csipos {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T> void put(std::ostream &out, T value)
{
    out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T> T get(std::istream &in, const char *what)
{
    T value{};
    in.read(reinterpret_cast<char *>(&value), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError(std::string("dataset file truncated while reading ") + what);
    return value;
}

void get_bytes(std::istream &in, char *dst, std::size_t n, const char *what)
{
    in.read(dst, static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw FormatError(std::string("dataset file truncated while reading ") + what);
}

struct Header {
    std::uint32_t version = 0;
    std::uint64_t count = 0;
    std::array<std::uint16_t, 3> dims{};
    SceneConfig config;
};

void write_header(std::ostream &out, std::uint32_t version, std::uint64_t count, const std::array<std::uint16_t, 3> &dims,
                  const SceneConfig &config)
{
    out.write(kDatasetMagic, 4);
    put<std::uint32_t>(out, version);
    put<std::uint64_t>(out, count);
    for (auto d : dims)
        put<std::uint16_t>(out, d);
    const std::string blob = scene_config_to_json(config).dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Header read_header(std::istream &in)
{
    char magic[4];
    get_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw FormatError("not a dataset file (bad magic)");
    Header h;
    h.version = get<std::uint32_t>(in, "format version");
    h.count = get<std::uint64_t>(in, "sample count");
    for (auto &d : h.dims)
        d = get<std::uint16_t>(in, "dims");
    const auto len = get<std::uint32_t>(in, "config length");
    std::string blob(len, '\0');
    get_bytes(in, blob.data(), len, "config blob");
    json node;
    try {
        node = json::parse(blob);
    } catch (const json::parse_error &e) {
        throw FormatError(std::string("dataset config blob is not valid JSON: ") + e.what());
    }
    Diagnostics diag;
    h.config = scene_config_from_json(node, "config", diag);
    if (!diag.empty())
        throw FormatError("dataset config blob is invalid: " + diag.front());
    return h;
}

void write_sample_meta(std::ostream &out, std::uint64_t id, std::uint8_t sector, bool los,
                       const std::optional<Vec2> &label)
{
    put<std::uint64_t>(out, id);
    put<std::uint8_t>(out, sector);
    put<std::uint8_t>(out, los ? 1 : 0);
    put<std::uint8_t>(out, label ? 1 : 0);
    put<double>(out, label ? label->x : 0.0);
    put<double>(out, label ? label->y : 0.0);
}

void read_sample_meta(std::istream &in, std::uint64_t &id, std::uint8_t &sector, bool &los, std::optional<Vec2> &label)
{
    id = get<std::uint64_t>(in, "sample id");
    sector = get<std::uint8_t>(in, "sector");
    los = get<std::uint8_t>(in, "los flag") != 0;
    const bool has_label = get<std::uint8_t>(in, "label flag") != 0;
    const double x = get<double>(in, "label");
    const double y = get<double>(in, "label");
    if (has_label)
        label = Vec2{x, y};
    else
        label.reset();
}

void expect_end(std::istream &in)
{
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("dataset file has trailing bytes after the last sample");
}

} // namespace

json scene_config_to_json(const SceneConfig &c)
{
    json j;
    j["bs_position"] = {c.bs_position.x, c.bs_position.y, c.bs_position.z};
    j["carrier_hz"] = c.carrier_hz;
    j["subcarrier_spacing_hz"] = c.subcarrier_spacing_hz;
    j["comb_stride"] = c.comb_stride;
    j["n_freq_bins"] = c.n_freq_bins;
    j["n_ue_ant"] = c.n_ue_ant;
    j["bs_array_rows"] = c.bs_array_rows;
    j["bs_array_cols"] = c.bs_array_cols;
    j["element_spacing_wavelengths"] = c.element_spacing_wavelengths;
    j["sector_boresights_deg"] = c.sector_boresights_deg;
    j["n_rx_per_sector"] = c.n_rx_per_sector;
    j["rx_height_m"] = c.rx_height_m;
    j["rx_grid_spacing_m"] = c.rx_grid_spacing_m;
    j["rx_min_distance_m"] = c.rx_min_distance_m;
    j["rx_max_distance_m"] = c.rx_max_distance_m;
    j["n_scatterers"] = c.n_scatterers;
    j["scatterer_height_m"] = c.scatterer_height_m;
    j["scatterer_region"] = {c.scatterer_region.x_min, c.scatterer_region.y_min, c.scatterer_region.x_max,
                             c.scatterer_region.y_max};
    j["reflection_magnitude"] = c.reflection_magnitude;
    j["n_buildings"] = c.n_buildings;
    j["building_radius_min_m"] = c.building_radius_min_m;
    j["building_radius_max_m"] = c.building_radius_max_m;
    j["penetration_loss_db"] = c.penetration_loss_db;
    j["labeled_fraction"] = c.labeled_fraction;
    j["snr_db"] = double_to_json(c.snr_db);
    j["ta_max_s"] = c.ta_max_s;
    j["seed"] = c.seed;
    return j;
}

SceneConfig scene_config_from_json(const json &node, const std::string &path, Diagnostics &diag)
{
    SceneConfig c;
    ConfigReader r(node, path, diag);
    std::array<double, 3> bs{c.bs_position.x, c.bs_position.y, c.bs_position.z};
    r.read("bs_position", bs);
    c.bs_position = {bs[0], bs[1], bs[2]};
    r.read("carrier_hz", c.carrier_hz);
    r.read("subcarrier_spacing_hz", c.subcarrier_spacing_hz);
    r.read("comb_stride", c.comb_stride);
    r.read("n_freq_bins", c.n_freq_bins);
    r.read("n_ue_ant", c.n_ue_ant);
    r.read("bs_array_rows", c.bs_array_rows);
    r.read("bs_array_cols", c.bs_array_cols);
    r.read("element_spacing_wavelengths", c.element_spacing_wavelengths);
    r.read("sector_boresights_deg", c.sector_boresights_deg);
    r.read("n_rx_per_sector", c.n_rx_per_sector);
    r.read("rx_height_m", c.rx_height_m);
    r.read("rx_grid_spacing_m", c.rx_grid_spacing_m);
    r.read("rx_min_distance_m", c.rx_min_distance_m);
    r.read("rx_max_distance_m", c.rx_max_distance_m);
    r.read("n_scatterers", c.n_scatterers);
    r.read("scatterer_height_m", c.scatterer_height_m);
    std::array<double, 4> box{c.scatterer_region.x_min, c.scatterer_region.y_min, c.scatterer_region.x_max,
                              c.scatterer_region.y_max};
    r.read("scatterer_region", box);
    c.scatterer_region = {box[0], box[1], box[2], box[3]};
    r.read("reflection_magnitude", c.reflection_magnitude);
    r.read("n_buildings", c.n_buildings);
    r.read("building_radius_min_m", c.building_radius_min_m);
    r.read("building_radius_max_m", c.building_radius_max_m);
    r.read("penetration_loss_db", c.penetration_loss_db);
    r.read("labeled_fraction", c.labeled_fraction);
    r.read("snr_db", c.snr_db);
    r.read("ta_max_s", c.ta_max_s);
    r.read("seed", c.seed);
    r.finish();
    return c;
}

void write_dataset(const Dataset &dataset, std::ostream &out)
{
    const auto &c = dataset.config;
    const std::array<std::uint16_t, 3> dims{static_cast<std::uint16_t>(c.n_ue_ant),
                                            static_cast<std::uint16_t>(c.n_bs_ant()),
                                            static_cast<std::uint16_t>(c.n_freq_bins)};
    write_header(out, dataset.format_version, dataset.samples.size(), dims, c);
    std::vector<float> buffer;
    for (const auto &s : dataset.samples) {
        if (!s.csi || s.csi->n_ue() != dims[0] || s.csi->n_bs() != dims[1] || s.csi->n_freq() != dims[2])
            throw FormatError("sample " + std::to_string(s.id) + " CSI shape does not match the dataset config");
        write_sample_meta(out, s.id, s.sector, s.is_los, s.position);
        const auto values = s.csi->values();
        buffer.resize(2 * values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            buffer[2 * i] = static_cast<float>(values[i].real());
            buffer[2 * i + 1] = static_cast<float>(values[i].imag());
        }
        out.write(reinterpret_cast<const char *>(buffer.data()),
                  static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    }
    if (!out)
        throw FormatError("failed writing dataset");
}

void write_dataset(const Dataset &dataset, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    write_dataset(dataset, out);
}

Dataset read_dataset(std::istream &in)
{
    const Header h = read_header(in);
    if (h.version != Dataset::kCsiFormatVersion)
        throw FormatError("unsupported dataset format version " + std::to_string(h.version) +
                          (h.version == kFeatureFormatVersion ? " (this is a preprocessed feature file)" : ""));
    Dataset ds;
    ds.config = h.config;
    ds.seed = h.config.seed;
    ds.format_version = h.version;
    if (h.dims[0] != h.config.n_ue_ant || h.dims[1] != h.config.n_bs_ant() || h.dims[2] != h.config.n_freq_bins)
        throw FormatError("dataset dims do not match the embedded config");

    const std::size_t n = std::size_t{h.dims[0]} * h.dims[1] * h.dims[2];
    std::vector<float> buffer(2 * n);
    ds.samples.reserve(h.count);
    for (std::uint64_t i = 0; i < h.count; ++i) {
        Sample s;
        read_sample_meta(in, s.id, s.sector, s.is_los, s.position);
        s.origin_sector = s.sector;
        get_bytes(in, reinterpret_cast<char *>(buffer.data()), buffer.size() * sizeof(float), "CSI payload");
        CsiTensor csi(h.dims[0], h.dims[1], h.dims[2]);
        auto values = csi.values();
        for (std::size_t k = 0; k < n; ++k)
            values[k] = cplx(buffer[2 * k], buffer[2 * k + 1]);
        s.csi = std::make_shared<const CsiTensor>(std::move(csi));
        ds.samples.push_back(std::move(s));
    }
    expect_end(in);
    return ds;
}

Dataset read_dataset(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open dataset '" + path + "'");
    return read_dataset(in);
}

void write_feature_file(const FeatureFile &file, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    write_header(out, kFeatureFormatVersion, file.records.size(), file.dims, file.config);
    const std::size_t n = std::size_t{file.dims[0]} * file.dims[1] * file.dims[2];
    for (const auto &r : file.records) {
        if (r.values.size() != n)
            throw FormatError("feature record " + std::to_string(r.id) + " has the wrong size");
        write_sample_meta(out, r.id, r.sector, r.is_los, r.position);
        out.write(reinterpret_cast<const char *>(r.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!out)
        throw FormatError("failed writing feature file");
}

FeatureFile read_feature_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open feature file '" + path + "'");
    const Header h = read_header(in);
    if (h.version != kFeatureFormatVersion)
        throw FormatError("not a preprocessed feature file (format version " + std::to_string(h.version) + ")");
    FeatureFile f;
    f.dims = h.dims;
    f.config = h.config;
    const std::size_t n = std::size_t{h.dims[0]} * h.dims[1] * h.dims[2];
    for (std::uint64_t i = 0; i < h.count; ++i) {
        FeatureRecord r;
        read_sample_meta(in, r.id, r.sector, r.is_los, r.position);
        r.values.resize(n);
        get_bytes(in, reinterpret_cast<char *>(r.values.data()), n * sizeof(float), "feature payload");
        f.records.push_back(std::move(r));
    }
    expect_end(in);
    return f;
}

void write_truth_csv(const Dataset &dataset, const std::string &path)
{
    if (dataset.truth.size() != dataset.samples.size())
        throw FormatError("dataset carries no ground truth to export");
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << "id,x,y,sector,los\n" << std::setprecision(17);
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto &s = dataset.samples[i];
        out << s.id << ',' << dataset.truth[i].x << ',' << dataset.truth[i].y << ',' << int(s.sector) << ','
            << (s.is_los ? 1 : 0) << '\n';
    }
}

void read_truth_csv(Dataset &dataset, const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open ground truth '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line != "id,x,y,sector,los")
        throw FormatError("ground truth '" + path + "' has an unexpected header");
    std::vector<Vec2> truth(dataset.samples.size());
    std::vector<bool> filled(dataset.samples.size(), false);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::uint64_t id = 0;
        double x = 0, y = 0;
        char comma = 0;
        if (!(row >> id >> comma >> x >> comma >> y))
            throw FormatError("malformed ground truth row: " + line);
        if (id >= dataset.samples.size() || dataset.samples[id].id != id)
            throw FormatError("ground truth id " + std::to_string(id) + " does not match the dataset");
        truth[id] = {x, y};
        filled[id] = true;
        ++rows;
    }
    if (rows != dataset.samples.size() || std::find(filled.begin(), filled.end(), false) != filled.end())
        throw FormatError("ground truth '" + path + "' does not cover every sample");
    dataset.truth = std::move(truth);
}

} // namespace csipos

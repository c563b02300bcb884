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
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

using namespace csipos;
using csipos::testing::TempDir;
using csipos::testing::tiny_scene;

TEST(DatasetIo, RoundTripPreservesSamples)
{
    const Dataset ds = generate_dataset(tiny_scene());
    std::stringstream buf;
    write_dataset(ds, buf);
    const Dataset back = read_dataset(buf);
    ASSERT_EQ(back.samples.size(), ds.samples.size());
    EXPECT_EQ(back.config, ds.config);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
        EXPECT_EQ(back.samples[i].sector, ds.samples[i].sector);
        EXPECT_EQ(back.samples[i].is_los, ds.samples[i].is_los);
        EXPECT_EQ(back.samples[i].position, ds.samples[i].position);
        // Generated CSI is already f32-representable, so the round trip is exact.
        EXPECT_TRUE(*back.samples[i].csi == *ds.samples[i].csi);
    }
    EXPECT_TRUE(back.truth.empty());
}

TEST(DatasetIo, HeaderLayout)
{
    const Dataset ds = generate_dataset(tiny_scene());
    std::stringstream buf;
    write_dataset(ds, buf);
    const std::string bytes = buf.str();
    ASSERT_GE(bytes.size(), 22u);
    EXPECT_EQ(bytes.substr(0, 4), "CPLB");
    std::uint32_t version = 0;
    std::uint64_t count = 0;
    std::uint16_t dims[3]{};
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&count, bytes.data() + 8, 8);
    std::memcpy(dims, bytes.data() + 16, 6);
    EXPECT_EQ(version, 1u);
    EXPECT_EQ(count, 100u);
    EXPECT_EQ(dims[0], 2);
    EXPECT_EQ(dims[1], 32);
    EXPECT_EQ(dims[2], 16);
}

TEST(DatasetIo, TruncationAndTrailingBytesAreErrors)
{
    const Dataset ds = generate_dataset(tiny_scene());
    std::stringstream buf;
    write_dataset(ds, buf);
    const std::string bytes = buf.str();

    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_dataset(cut), FormatError);
    std::stringstream extra(bytes + "x");
    EXPECT_THROW(read_dataset(extra), FormatError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream magic(bad);
    EXPECT_THROW(read_dataset(magic), FormatError);
}

TEST(DatasetIo, TruthSidecarRoundTrip)
{
    TempDir dir("io");
    const Dataset ds = generate_dataset(tiny_scene());
    write_dataset(ds, dir.file("d.bin"));
    write_truth_csv(ds, dir.file("d.truth.csv"));
    Dataset back = read_dataset(dir.file("d.bin"));
    read_truth_csv(back, dir.file("d.truth.csv"));
    ASSERT_EQ(back.truth.size(), ds.truth.size());
    for (std::size_t i = 0; i < ds.truth.size(); ++i)
        EXPECT_EQ(back.truth[i], ds.truth[i]);

    Dataset other = generate_dataset(tiny_scene(8));
    other.samples.pop_back();
    EXPECT_THROW(read_truth_csv(other, dir.file("d.truth.csv")), FormatError);
}

TEST(DatasetIo, SceneConfigJsonStrict)
{
    SceneConfig c = tiny_scene();
    c.snr_db = std::numeric_limits<double>::infinity();
    Diagnostics diag;
    const SceneConfig back = scene_config_from_json(scene_config_to_json(c), "scene", diag);
    EXPECT_TRUE(diag.empty());
    EXPECT_EQ(back, c);

    json j = scene_config_to_json(c);
    j["bogus"] = 1;
    j["n_freq_bins"] = "many";
    Diagnostics bad;
    scene_config_from_json(j, "scene", bad);
    EXPECT_EQ(bad.size(), 2u);
}

TEST(FeatureFile, RoundTrip)
{
    TempDir dir("feat");
    FeatureFile f;
    f.dims = {2, 3, 4};
    f.config = tiny_scene();
    for (std::uint64_t i = 0; i < 5; ++i) {
        FeatureRecord r;
        r.id = i;
        r.sector = static_cast<std::uint8_t>(i % 3);
        r.is_los = i % 2 == 0;
        if (i == 2)
            r.position = Vec2{1.5, -2.5};
        r.values.assign(24, 0.25f * float(i));
        f.records.push_back(r);
    }
    write_feature_file(f, dir.file("f.bin"));
    const FeatureFile back = read_feature_file(dir.file("f.bin"));
    EXPECT_EQ(back.dims, f.dims);
    ASSERT_EQ(back.records.size(), 5u);
    EXPECT_EQ(back.records[2].position, f.records[2].position);
    EXPECT_EQ(back.records[4].values, f.records[4].values);
    EXPECT_THROW(read_dataset(dir.file("f.bin")), FormatError);
}

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

#include "json.hpp"

#include "csipos/common.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

namespace csipos {

using json = nlohmann::json;
using Diagnostics = std::vector<std::string>;

// Strict reader over one JSON object: every key must be consumed, every type must
// match. Problems are appended to `diag` prefixed with the dotted key path.
static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields are read through the size_t overload");

class ConfigReader {
  public:
    ConfigReader(const json &node, std::string path, Diagnostics &diag);
    ~ConfigReader() = default;

    ConfigReader(const ConfigReader &) = delete;
    ConfigReader &operator=(const ConfigReader &) = delete;

    bool has(const std::string &key) const { return node_.is_object() && node_.contains(key); }
    std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string &path() const { return path_; }
    Diagnostics &diagnostics() { return diag_; }

    void read(const std::string &key, double &out);
    void read(const std::string &key, std::size_t &out);
    void read(const std::string &key, bool &out);
    void read(const std::string &key, std::string &out);
    template <std::size_t N> void read(const std::string &key, std::array<double, N> &out);
    template <std::size_t N> void read(const std::string &key, std::array<std::size_t, N> &out);
    void read(const std::string &key, std::vector<double> &out);

    // Marks `key` consumed and returns the raw node, or nullptr when absent.
    const json *take(const std::string &key);

    // Reports keys that were never consumed.
    void finish();

    void error(const std::string &key, const std::string &message);

  private:
    const json &node_;
    std::string path_;
    Diagnostics &diag_;
    std::set<std::string> seen_;
};

// Reads a number that may also be the strings "inf", "+inf" or "-inf".
bool json_to_double(const json &node, double &out);
json double_to_json(double value);

template <std::size_t N> void ConfigReader::read(const std::string &key, std::array<double, N> &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_array() || node->size() != N) {
        error(key, "expected an array of " + std::to_string(N) + " numbers");
        return;
    }
    for (std::size_t i = 0; i < N; ++i)
        if (!json_to_double((*node)[i], out[i]))
            error(key, "element " + std::to_string(i) + " is not a number");
}

template <std::size_t N> void ConfigReader::read(const std::string &key, std::array<std::size_t, N> &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_array() || node->size() != N) {
        error(key, "expected an array of " + std::to_string(N) + " non-negative integers");
        return;
    }
    for (std::size_t i = 0; i < N; ++i) {
        if (!(*node)[i].is_number_unsigned()) {
            error(key, "element " + std::to_string(i) + " is not a non-negative integer");
            continue;
        }
        out[i] = (*node)[i].get<std::size_t>();
    }
}

// Throws ConfigError listing every diagnostic when non-empty.
void throw_if_any(const Diagnostics &diag, const std::string &what);

json read_json_file(const std::string &path);

} // namespace csipos

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

#include "csipos/config_reader.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace csipos {

ConfigReader::ConfigReader(const json &node, std::string path, Diagnostics &diag)
    : node_(node), path_(std::move(path)), diag_(diag)
{
    if (!node_.is_object())
        diag_.push_back((path_.empty() ? std::string("<root>") : path_) + ": expected an object");
}

const json *ConfigReader::take(const std::string &key)
{
    if (!has(key))
        return nullptr;
    seen_.insert(key);
    return &node_.at(key);
}

void ConfigReader::error(const std::string &key, const std::string &message)
{
    diag_.push_back(key_path(key) + ": " + message);
}

bool json_to_double(const json &node, double &out)
{
    if (node.is_number()) {
        out = node.get<double>();
        return true;
    }
    if (node.is_string()) {
        const auto s = node.get<std::string>();
        if (s == "inf" || s == "+inf") {
            out = std::numeric_limits<double>::infinity();
            return true;
        }
        if (s == "-inf") {
            out = -std::numeric_limits<double>::infinity();
            return true;
        }
    }
    return false;
}

json double_to_json(double value)
{
    if (std::isinf(value))
        return value > 0 ? json("inf") : json("-inf");
    return json(value);
}

void ConfigReader::read(const std::string &key, double &out)
{
    const json *node = take(key);
    if (node && !json_to_double(*node, out))
        error(key, "expected a number");
}

void ConfigReader::read(const std::string &key, std::size_t &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_number_integer() || (!node->is_number_unsigned() && node->get<std::int64_t>() < 0)) {
        error(key, "expected a non-negative integer");
        return;
    }
    out = node->get<std::size_t>();
}

void ConfigReader::read(const std::string &key, bool &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_boolean()) {
        error(key, "expected true or false");
        return;
    }
    out = node->get<bool>();
}

void ConfigReader::read(const std::string &key, std::string &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_string()) {
        error(key, "expected a string");
        return;
    }
    out = node->get<std::string>();
}

void ConfigReader::read(const std::string &key, std::vector<double> &out)
{
    const json *node = take(key);
    if (!node)
        return;
    if (!node->is_array()) {
        error(key, "expected an array of numbers");
        return;
    }
    out.clear();
    for (std::size_t i = 0; i < node->size(); ++i) {
        double v = 0.0;
        if (!json_to_double((*node)[i], v))
            error(key, "element " + std::to_string(i) + " is not a number");
        out.push_back(v);
    }
}

void ConfigReader::finish()
{
    if (!node_.is_object())
        return;
    for (const auto &item : node_.items())
        if (!seen_.contains(item.key()))
            diag_.push_back(key_path(item.key()) + ": unknown key '" + item.key() + "'");
}

void throw_if_any(const Diagnostics &diag, const std::string &what)
{
    if (diag.empty())
        return;
    std::ostringstream msg;
    msg << what << ":";
    for (const auto &d : diag)
        msg << "\n  - " << d;
    throw ConfigError(msg.str());
}

json read_json_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

} // namespace csipos

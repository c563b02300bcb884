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

#include "csipos/hash.hpp"

#include "csipos/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <vector>

namespace csipos {

namespace {

struct DigestCtx {
    DigestCtx() : ctx(EVP_MD_CTX_new())
    {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("SHA-256 initialisation failed");
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    DigestCtx(const DigestCtx &) = delete;
    DigestCtx &operator=(const DigestCtx &) = delete;

    void update(const void *data, std::size_t n)
    {
        if (EVP_DigestUpdate(ctx, data, n) != 1)
            throw std::runtime_error("SHA-256 update failed");
    }

    std::string hex()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1)
            throw std::runtime_error("SHA-256 finalisation failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

    EVP_MD_CTX *ctx;
};

} // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes)
{
    DigestCtx d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_hex(std::string_view text)
{
    DigestCtx d;
    d.update(text.data(), text.size());
    return d.hex();
}

std::string sha256_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open '" + path + "' for hashing");
    DigestCtx d;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0)
            d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

} // namespace csipos

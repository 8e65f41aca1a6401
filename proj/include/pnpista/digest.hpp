// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pnpista/errors.hpp"

namespace pnpista {

/// 64-bit FNV-1a over a byte range. Used for content digests in run
/// metadata and for tagging a denoiser with the guide image it was
/// built from. Not cryptographic.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 14695981039346656037ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::vector<double>& v,
                             std::uint64_t seed = 14695981039346656037ULL) {
    return v.empty() ? seed : fnv1a64(v.data(), v.size() * sizeof(double), seed);
}

inline std::string hex_digest(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file for hashing: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return bytes.empty() ? fnv1a64(nullptr, 0) : fnv1a64(bytes.data(), bytes.size());
}

} // namespace pnpista

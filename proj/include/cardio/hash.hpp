#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cardio {

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Order-sensitive hash of a column list.
inline std::string schema_hash(std::span<const std::string> columns) {
    std::uint64_t h = fnv1a("cardio-schema");
    for (const auto& c : columns) {
        h = fnv1a(c, h);
        h = fnv1a("\n", h);
    }
    return hex64(h);
}

}  // namespace cardio

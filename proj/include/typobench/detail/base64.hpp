#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace typobench::detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const std::uint8_t*>(data);
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
        if (i + 1 < len) chunk |= std::uint32_t(bytes[i + 1]) << 8;
        if (i + 2 < len) chunk |= std::uint32_t(bytes[i + 2]);
        out.push_back(kB64Alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kB64Alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

inline std::string base64_encode(std::string_view s) { return base64_encode(s.data(), s.size()); }

inline std::string base64_encode(const std::vector<std::uint8_t>& v) {
    return base64_encode(v.data(), v.size());
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw std::invalid_argument("base64_decode: bad character");
    };
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    std::uint32_t chunk = 0;
    int have = 0;
    for (char c : s) {
        int v = value_of(c);
        if (v < 0) break; // padding
        chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        if (++have == 4) {
            out.push_back(static_cast<std::uint8_t>(chunk >> 16));
            out.push_back(static_cast<std::uint8_t>(chunk >> 8));
            out.push_back(static_cast<std::uint8_t>(chunk));
            chunk = 0;
            have = 0;
        }
    }
    if (have == 2) {
        out.push_back(static_cast<std::uint8_t>(chunk >> 4));
    } else if (have == 3) {
        out.push_back(static_cast<std::uint8_t>(chunk >> 10));
        out.push_back(static_cast<std::uint8_t>(chunk >> 2));
    } else if (have != 0) {
        throw std::invalid_argument("base64_decode: truncated input");
    }
    return out;
}

} // namespace typobench::detail

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sortition {

using Bytes = std::vector<uint8_t>;
using Bytes16 = std::array<uint8_t, 16>;
using Bytes32 = std::array<uint8_t, 32>;
using Bytes64 = std::array<uint8_t, 64>;
using Bytes80 = std::array<uint8_t, 80>;
using ByteView = std::span<const uint8_t>;

inline std::string to_hex(ByteView data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

inline Bytes from_hex(const std::string& hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw std::invalid_argument("hex string with odd length");
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
        out[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return out;
}

template <size_t N>
std::array<uint8_t, N> array_from_hex(const std::string& hex) {
    Bytes raw = from_hex(hex);
    if (raw.size() != N) throw std::invalid_argument("hex string with unexpected length");
    std::array<uint8_t, N> out{};
    std::memcpy(out.data(), raw.data(), N);
    return out;
}

inline void put_be64(uint8_t* out, uint64_t v) {
    for (int i = 7; i >= 0; --i) {
        out[7 - i] = static_cast<uint8_t>(v >> (8 * i));
    }
}

inline uint64_t get_be64(const uint8_t* in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in[i];
    return v;
}

inline std::array<uint8_t, 8> be64(uint64_t v) {
    std::array<uint8_t, 8> out{};
    put_be64(out.data(), v);
    return out;
}

inline void append(Bytes& buf, ByteView data) { buf.insert(buf.end(), data.begin(), data.end()); }

}  // namespace sortition

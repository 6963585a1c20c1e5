#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace uavvln {

// Shortest round-trip decimal form ("2", "0.5", "1.5707963267948966").
inline std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

// FNV-1a, used for content digests in logs and result files.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex_digest(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    return out;
}

} // namespace uavvln

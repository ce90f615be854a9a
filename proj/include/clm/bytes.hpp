#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clm {

// Raw file content; the unit every module exchanges.
using ByteSequence = std::vector<std::uint8_t>;

// 64-bit FNV-1a, used for manifest/report determinism checks.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const ByteSequence& b) { return fnv1a64(b.data(), b.size()); }

inline ByteSequence read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path.string());
    ByteSequence out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return out;
}

inline void write_file(const std::filesystem::path& path, const ByteSequence& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace clm

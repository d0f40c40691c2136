// SMLC checkpoint format, shared by the recommender and transfer networks.
//
// Layout (all integers little-endian):
//   magic "SMLC" | u32 version | tensor*
//   tensor := u32 name_len | name bytes (UTF-8) | u64 rows | u64 cols
//             | rows*cols float32 (row-major)
// Tensors are read until end of file. Readers reject unknown magic/version.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sml/matrix.hpp"

namespace sml {

inline constexpr char kCheckpointMagic[4] = {'S', 'M', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::vector<std::pair<std::string, DenseMatrix>> tensors;

    void add(std::string name, DenseMatrix m) { tensors.emplace_back(std::move(name), std::move(m)); }

    const DenseMatrix* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }

    const DenseMatrix& require(const std::string& name) const {
        const DenseMatrix* t = find(name);
        if (!t) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        return *t;
    }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    os.write(kCheckpointMagic, 4);
    detail::put_u32(os, kCheckpointVersion);
    for (const auto& [name, t] : ckpt.tensors) {
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u64(os, t.rows);
        detail::put_u64(os, t.cols);
        for (double v : t.data) detail::put_f32(os, static_cast<float>(v));
    }
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    write_checkpoint(os, ckpt);
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    std::uint32_t version = 0;
    if (!detail::get_u32(is, version) || version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    std::uint32_t name_len = 0;
    while (detail::get_u32(is, name_len)) {
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated name");
        std::uint64_t rows = 0, cols = 0;
        if (!detail::get_u64(is, rows) || !detail::get_u64(is, cols))
            throw std::runtime_error("checkpoint: truncated dims for '" + name + "'");
        DenseMatrix t(rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint32_t bits = 0;
            if (!detail::get_u32(is, bits))
                throw std::runtime_error("checkpoint: truncated data for '" + name + "'");
            float f;
            std::memcpy(&f, &bits, 4);
            t.data[i] = static_cast<double>(f);
        }
        ckpt.add(std::move(name), std::move(t));
    }
    return ckpt;
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    return read_checkpoint(is);
}

}  // namespace sml

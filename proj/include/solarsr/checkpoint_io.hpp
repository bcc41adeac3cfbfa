#pragma once

// Checkpoint container, all integers little-endian:
//
//   magic      8 bytes  "SRRRDB\0\1"
//   version    u32      1
//   config     u32 in_channels, out_channels, base_features, num_rrdb,
//                  growth_channels, scale_factor; f32 residual_scale
//   count      u32      number of parameters
//   directory  per parameter: u32 name length, name bytes, u64 n, c, h, w,
//              u64 absolute byte offset of the payload
//   payloads   float32 values, row-major NCHW

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/sr_engine.hpp"

namespace solarsr::checkpoint {

inline constexpr std::array<std::uint8_t, 8> kMagic{'S', 'R', 'R', 'R', 'D', 'B', 0, 1};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    [[nodiscard]] std::size_t size() const noexcept { return bytes_.size(); }
    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        require(n <= bytes_.size() - pos_, ErrorCode::CorruptDirectory, "directory runs past end of data");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> save(const Checkpoint& ckpt) {
    const auto& a = ckpt.arch();
    detail::Writer w;
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kVersion);
    for (int v : {a.in_channels, a.out_channels, a.base_features, a.num_rrdb, a.growth_channels, a.scale_factor}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.f32(a.residual_scale);
    w.u32(static_cast<std::uint32_t>(ckpt.size()));

    std::size_t dir_size = 0;
    for (const auto& name : ckpt.names()) dir_size += 4 + name.size() + 5 * 8;
    std::uint64_t offset = w.size() + dir_size;
    for (std::size_t i = 0; i < ckpt.size(); ++i) {
        const auto& name = ckpt.names()[i];
        const auto& s = ckpt.values()[i].shape();
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u64(d);
        w.u64(offset);
        offset += 4 * s.count();
    }
    for (const auto& t : ckpt.values()) {
        for (float v : t.data()) w.f32(v);
    }
    return std::move(w.bytes());
}

inline Checkpoint load(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= kMagic.size() && std::equal(kMagic.begin(), kMagic.end(), bytes.begin()), ErrorCode::BadMagic,
            "not a checkpoint container");
    detail::Reader r(bytes.subspan(kMagic.size()));
    const std::uint32_t version = r.u32();
    require(version == kVersion, ErrorCode::VersionUnsupported, "checkpoint version " + std::to_string(version));
    GeneratorConfig a;
    a.in_channels = static_cast<int>(r.u32());
    a.out_channels = static_cast<int>(r.u32());
    a.base_features = static_cast<int>(r.u32());
    a.num_rrdb = static_cast<int>(r.u32());
    a.growth_channels = static_cast<int>(r.u32());
    a.scale_factor = static_cast<int>(r.u32());
    a.residual_scale = r.f32();
    const std::uint32_t count = r.u32();

    Checkpoint ckpt(a);
    constexpr std::uint64_t kDimLimit = std::uint64_t{1} << 31;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32();
        std::string name = r.str(len);
        Shape s;
        s.n = r.u64();
        s.c = r.u64();
        s.h = r.u64();
        s.w = r.u64();
        const std::uint64_t offset = r.u64();
        require(s.n < kDimLimit && s.c < kDimLimit && s.h < kDimLimit && s.w < kDimLimit, ErrorCode::CorruptDirectory,
                name + ": implausible shape");
        const std::uint64_t limit = bytes.size() / 4;
        std::uint64_t count_elems = 1;
        for (std::uint64_t d : {s.n, s.c, s.h, s.w}) {
            require(d == 0 || count_elems <= limit / d, ErrorCode::CorruptDirectory, name + ": payload larger than file");
            count_elems *= d;
        }
        const std::uint64_t nbytes = 4 * count_elems;
        require(offset <= bytes.size() && nbytes <= bytes.size() - offset, ErrorCode::CorruptDirectory,
                name + ": payload out of bounds");
        std::vector<float> data(count_elems);
        for (std::size_t k = 0; k < count_elems; ++k) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + 4 * k + b]) << (8 * b);
            data[k] = std::bit_cast<float>(v);
        }
        try {
            ckpt.add(std::move(name), Tensor(s, std::move(data)));
        } catch (const Error& e) {
            throw Error(ErrorCode::CorruptDirectory, e.message());
        }
    }
    return ckpt;
}

inline void save_file(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = save(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::IoError, "short write to " + path.string());
}

inline Checkpoint load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load(bytes);
}

}  // namespace solarsr::checkpoint

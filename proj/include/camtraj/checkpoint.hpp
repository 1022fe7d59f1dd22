#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camtraj/util.hpp"

namespace camtraj {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NamedTensorData {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
};

// Binary weight file, little-endian throughout:
//   magic "CT1W", u32 version, u32 tensor count,
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims..., f64 data.
namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const std::vector<NamedTensorData>& tensors) {
    std::string out = "CT1W";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensorData& t : tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        std::uint64_t numel = 1;
        for (std::uint64_t d : t.dims) {
            detail::put_u64(out, d);
            numel *= d;
        }
        if (numel != t.values.size())
            throw CheckpointError("tensor '" + t.name + "': dims do not match value count");
        for (double v : t.values) detail::put_f64(out, v);
    }
    return out;
}

inline std::vector<NamedTensorData> deserialize_checkpoint(const std::string& buf) {
    detail::Reader r{buf};
    if (r.bytes(4) != "CT1W") throw CheckpointError("bad checkpoint magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::vector<NamedTensorData> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensorData t;
        const std::uint32_t name_len = r.u32();
        t.name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.dims.push_back(r.u64());
            numel *= t.dims.back();
        }
        t.values.resize(numel);
        for (std::uint64_t k = 0; k < numel; ++k) t.values[static_cast<size_t>(k)] = r.f64();
        tensors.push_back(std::move(t));
    }
    if (r.pos != buf.size()) throw CheckpointError("trailing bytes after checkpoint payload");
    return tensors;
}

inline void write_checkpoint(const std::filesystem::path& path,
                             const std::vector<NamedTensorData>& tensors) {
    atomic_write_file(path, serialize_checkpoint(tensors));
}

inline std::vector<NamedTensorData> read_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace camtraj

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rankmoe/config.hpp"
#include "rankmoe/params.hpp"

namespace rankmoe {

// Binary checkpoint layout (all integers little-endian):
//   "RMOE"                       4 bytes magic
//   version                      u16
//   config digest                32 bytes
//   per tensor, in name order:
//     name length                u16
//     name                       UTF-8 bytes
//     rows, cols                 u32 each
//     data                       rows*cols f32, row-major
// The layout is frozen: round-trip tests compare files byte for byte.
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Cursor over a loaded checkpoint image. Every read checks the remaining
// byte count so a truncated file fails with a message, not a crash.
struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw checkpoint_error(std::string("checkpoint truncated while reading ") + what);
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

template <typename T>
inline std::string checkpoint_bytes(ParamSet<T>& params, const std::array<std::uint8_t, 32>& digest) {
    std::string out;
    out += "RMOE";
    detail::put_u16(out, kCheckpointVersion);
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    for (const auto& e : params.entries()) {
        if (e.name.size() > 0xffff)
            throw checkpoint_error("parameter name too long for checkpoint: " + e.name);
        detail::put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        detail::put_u32(out, static_cast<std::uint32_t>(e.tensor->rows));
        detail::put_u32(out, static_cast<std::uint32_t>(e.tensor->cols));
        for (std::size_t i = 0; i < e.tensor->numel(); ++i)
            detail::put_f32(out, static_cast<float>(e.tensor->data[i]));
    }
    return out;
}

template <typename T>
inline void save_checkpoint(ParamSet<T>& params, const std::array<std::uint8_t, 32>& digest,
                            const std::string& path) {
    std::string bytes = checkpoint_bytes(params, digest);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw checkpoint_error("cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw checkpoint_error("failed writing checkpoint " + path);
}

// Fills an already-constructed parameter set in place. Every tensor in the
// file must exist under the same name and shape, and every registered tensor
// must be present in the file; both directions fail loudly since a mismatch
// means the checkpoint belongs to a different configuration.
template <typename T>
inline void load_checkpoint_bytes(const std::string& bytes, ParamSet<T>& params,
                                  const std::array<std::uint8_t, 32>& expect_digest) {
    detail::ByteReader r{bytes};
    if (r.bytes(4, "magic") != "RMOE")
        throw checkpoint_error("not a checkpoint file: bad magic bytes");
    std::uint16_t version = r.u16("version");
    if (version != kCheckpointVersion)
        throw checkpoint_error("unsupported checkpoint version " + std::to_string(version) +
                               " (expected " + std::to_string(kCheckpointVersion) + ")");
    std::string dig_raw = r.bytes(32, "config digest");
    std::array<std::uint8_t, 32> file_digest{};
    std::memcpy(file_digest.data(), dig_raw.data(), 32);
    if (file_digest != expect_digest)
        throw checkpoint_error("config digest mismatch: checkpoint " + digest_hex(file_digest) +
                               ", current config " + digest_hex(expect_digest));

    const auto& es = params.entries();
    std::vector<bool> seen(es.size(), false);
    while (r.pos < bytes.size()) {
        std::uint16_t name_len = r.u16("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        std::uint32_t rows = r.u32("tensor rows");
        std::uint32_t cols = r.u32("tensor cols");
        std::size_t idx = es.size();
        for (std::size_t i = 0; i < es.size(); ++i)
            if (es[i].name == name) {
                idx = i;
                break;
            }
        if (idx == es.size()) throw checkpoint_error("checkpoint holds unknown tensor " + name);
        if (seen[idx]) throw checkpoint_error("duplicate tensor in checkpoint: " + name);
        seen[idx] = true;
        Tensor<T>& t = *es[idx].tensor;
        if (t.rows != static_cast<int>(rows) || t.cols != static_cast<int>(cols))
            throw checkpoint_error("shape mismatch for " + name + ": checkpoint " +
                                   shape_str(static_cast<int>(rows), static_cast<int>(cols)) +
                                   ", model " + shape_str(t.rows, t.cols));
        for (std::size_t i = 0; i < t.numel(); ++i)
            t.data[i] = static_cast<T>(r.f32("tensor data"));
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw checkpoint_error("checkpoint missing tensor " + es[i].name);
}

template <typename T>
inline void load_checkpoint(const std::string& path, ParamSet<T>& params,
                            const std::array<std::uint8_t, 32>& expect_digest) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw checkpoint_error("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    load_checkpoint_bytes(bytes, params, expect_digest);
}

// Reads just the digest field, for error reporting before a full load.
inline std::array<std::uint8_t, 32> checkpoint_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw checkpoint_error("cannot open checkpoint " + path);
    std::string head(38, '\0');
    in.read(head.data(), 38);
    if (in.gcount() != 38) throw checkpoint_error("checkpoint truncated while reading header");
    if (head.substr(0, 4) != "RMOE")
        throw checkpoint_error("not a checkpoint file: bad magic bytes");
    std::array<std::uint8_t, 32> d{};
    std::memcpy(d.data(), head.data() + 6, 32);
    return d;
}

inline std::string vocab_sidecar_path(const std::string& checkpoint_path) {
    return checkpoint_path + ".vocab";
}

}  // namespace rankmoe

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ncst/tensor.hpp"

namespace ncst {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One container format for discriminators and the generator: a JSON header
/// (format version, model/encoder description, embedding dim, vocab hash)
/// followed by named tensors as raw little-endian scalars.
namespace ckpt {

constexpr char kMagic[4] = {'N', 'C', 'K', 'P'};
constexpr uint32_t kFormatVersion = 1;

using NamedTensors32 = std::vector<std::pair<std::string, TensorT<float>*>>;

template <class T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("checkpoint: truncated file");
    return v;
}

template <class Real>
void save(const std::string& path, nlohmann::json meta,
          const std::vector<std::pair<std::string, const TensorT<Real>*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot write " + path);
    meta["format_version"] = kFormatVersion;
    meta["scalar_bytes"] = static_cast<int>(sizeof(Real));
    const std::string header = meta.dump();

    out.write(kMagic, 4);
    write_raw<uint32_t>(out, kFormatVersion);
    write_raw<uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_raw<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_raw<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<uint32_t>(out, static_cast<uint32_t>(t->shape.size()));
        for (int d : t->shape) write_raw<uint32_t>(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * static_cast<int64_t>(sizeof(Real))));
    }
    if (!out) throw CheckpointError("checkpoint: write failure on " + path);
}

inline nlohmann::json read_header(std::ifstream& in, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    const uint32_t version = read_raw<uint32_t>(in);
    if (version != kFormatVersion)
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
    const uint64_t hlen = read_raw<uint64_t>(in);
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw CheckpointError("checkpoint: truncated header");
    auto meta = nlohmann::json::parse(header, nullptr, false);
    if (meta.is_discarded()) throw CheckpointError("checkpoint: corrupt header JSON");
    return meta;
}

/// Reads only the header.
inline nlohmann::json peek(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot read " + path);
    return read_header(in, path);
}

/// Fills the given named tensors by name; shapes must match, every name
/// must be present exactly once, and no extras may remain. When
/// expected_vocab_hash is non-zero a mismatch is refused.
template <class Real>
nlohmann::json load(const std::string& path,
                    const std::vector<std::pair<std::string, TensorT<Real>*>>& tensors,
                    uint64_t expected_vocab_hash = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot read " + path);
    auto meta = read_header(in, path);
    if (meta.value("scalar_bytes", 0) != static_cast<int>(sizeof(Real)))
        throw CheckpointError("checkpoint: scalar width mismatch in " + path);
    if (expected_vocab_hash != 0) {
        const std::string stored = meta.value("vocab_hash", "");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(expected_vocab_hash));
        if (stored != buf)
            throw CheckpointError("checkpoint: vocab hash mismatch (file " + stored + ", expected " +
                                  buf + ")");
    }

    const uint32_t count = read_raw<uint32_t>(in);
    if (count != tensors.size())
        throw CheckpointError("checkpoint: tensor count mismatch in " + path);
    std::vector<bool> filled(tensors.size(), false);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t nlen = read_raw<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (!in) throw CheckpointError("checkpoint: truncated tensor name");
        const uint32_t rank = read_raw<uint32_t>(in);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_raw<uint32_t>(in));

        size_t idx = tensors.size();
        for (size_t k = 0; k < tensors.size(); ++k)
            if (!filled[k] && tensors[k].first == name) {
                idx = k;
                break;
            }
        if (idx == tensors.size()) throw CheckpointError("checkpoint: unexpected tensor '" + name + "'");
        TensorT<Real>* dst = tensors[idx].second;
        if (dst->shape != shape)
            throw CheckpointError("checkpoint: shape mismatch for tensor '" + name + "'");
        in.read(reinterpret_cast<char*>(dst->data()),
                static_cast<std::streamsize>(dst->size() * static_cast<int64_t>(sizeof(Real))));
        if (!in) throw CheckpointError("checkpoint: truncated tensor data for '" + name + "'");
        filled[idx] = true;
    }
    return meta;
}

inline std::string hash_hex(uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ckpt
}  // namespace ncst

#include "eslm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "eslm/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace eslm {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'L', 'M'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw ParseError(std::string("checkpoint: truncated while reading ") + what);
    }
    return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, uint64_t iteration,
                     const ModelParams& params) {
    if (params.flat.size() != params.layout.total_floats) {
        throw ConfigError("checkpoint: flat size does not match layout");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("checkpoint: cannot open for writing: " + path);
    }
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, iteration);
    write_pod(out, static_cast<int32_t>(config.layers));
    write_pod(out, static_cast<int32_t>(config.hidden));
    write_pod(out, static_cast<int32_t>(config.heads));
    write_pod(out, static_cast<int32_t>(config.kv_heads));
    write_pod(out, static_cast<int32_t>(config.head_dim));
    write_pod(out, static_cast<int32_t>(config.intermediate));
    write_pod(out, static_cast<int32_t>(config.vocab));
    write_pod(out, static_cast<int32_t>(config.max_seq));
    write_pod(out, static_cast<uint8_t>(config.tie_embeddings ? 1 : 0));
    write_pod(out, config.rope_base);
    write_pod(out, static_cast<uint32_t>(params.layout.tensors.size()));
    for (const TensorInfo& t : params.layout.tensors) {
        write_pod(out, static_cast<uint16_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_pod(out, static_cast<uint64_t>(t.offset));
        write_pod(out, static_cast<uint8_t>(t.shape.size()));
        for (const int d : t.shape) {
            write_pod(out, static_cast<uint32_t>(d));
        }
    }
    write_pod(out, static_cast<uint64_t>(params.flat.size()));
    out.write(reinterpret_cast<const char*>(params.flat.data()),
              static_cast<std::streamsize>(params.flat.size() * sizeof(float)));
    if (!out) {
        throw ConfigError("checkpoint: write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("checkpoint: cannot open: " + path);
    }
    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    const uint32_t version = read_pod<uint32_t>(in, "version");
    if (version != kVersion) {
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.iteration = read_pod<uint64_t>(in, "iteration");
    ckpt.config.layers = read_pod<int32_t>(in, "layers");
    ckpt.config.hidden = read_pod<int32_t>(in, "hidden");
    ckpt.config.heads = read_pod<int32_t>(in, "heads");
    ckpt.config.kv_heads = read_pod<int32_t>(in, "kv_heads");
    ckpt.config.head_dim = read_pod<int32_t>(in, "head_dim");
    ckpt.config.intermediate = read_pod<int32_t>(in, "intermediate");
    ckpt.config.vocab = read_pod<int32_t>(in, "vocab");
    ckpt.config.max_seq = read_pod<int32_t>(in, "max_seq");
    ckpt.config.tie_embeddings = read_pod<uint8_t>(in, "tie_embeddings") != 0;
    ckpt.config.rope_base = read_pod<float>(in, "rope_base");
    ckpt.config.validate();

    const uint32_t n_tensors = read_pod<uint32_t>(in, "tensor count");
    Layout layout;
    size_t covered = 0;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        TensorInfo t;
        const uint16_t name_len = read_pod<uint16_t>(in, "tensor name length");
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        if (!in) throw ParseError("checkpoint: truncated tensor name");
        t.offset = read_pod<uint64_t>(in, "tensor offset");
        const uint8_t ndim = read_pod<uint8_t>(in, "tensor ndim");
        t.shape.resize(ndim);
        for (uint8_t d = 0; d < ndim; ++d) {
            t.shape[d] = static_cast<int>(read_pod<uint32_t>(in, "tensor dim"));
        }
        if (t.offset != covered) {
            throw ParseError("checkpoint: layout entries must be contiguous");
        }
        covered += t.size();
        layout.tensors.push_back(std::move(t));
    }
    layout.total_floats = covered;

    const uint64_t flat_len = read_pod<uint64_t>(in, "flat length");
    if (flat_len != covered) {
        throw ParseError("checkpoint: flat length does not match layout");
    }
    ckpt.params.layout = std::move(layout);
    ckpt.params.flat.resize(flat_len);
    in.read(reinterpret_cast<char*>(ckpt.params.flat.data()),
            static_cast<std::streamsize>(flat_len * sizeof(float)));
    if (!in) {
        throw ParseError("checkpoint: truncated parameter data");
    }
    return ckpt;
}

}  // namespace eslm

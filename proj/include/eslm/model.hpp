#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eslm/matrix.hpp"

namespace eslm {

// Causal transformer dimensions. Defaults are the desk-scale model used for
// CPU experiments; the same schema covers Qwen3-style configs up to 32B for
// accounting purposes.
struct ModelConfig {
    int layers = 2;
    int hidden = 64;
    int heads = 4;
    int kv_heads = 2;
    int head_dim = 16;
    int intermediate = 128;
    int vocab = 128;
    int max_seq = 256;
    bool tie_embeddings = true;
    float rope_base = 10000.0f;

    int q_dim() const { return heads * head_dim; }
    int kv_dim() const { return kv_heads * head_dim; }

    void validate() const;  // throws ConfigError
};

struct TensorInfo {
    std::string name;
    size_t offset = 0;
    std::vector<int> shape;

    size_t size() const;
};

// Ordered, non-overlapping map of named tensors onto one flat float vector.
struct Layout {
    std::vector<TensorInfo> tensors;
    size_t total_floats = 0;

    const TensorInfo* find(std::string_view name) const;
    const TensorInfo& require(std::string_view name) const;  // throws ConfigError
};

Layout build_layout(const ModelConfig& config);
size_t param_count(const ModelConfig& config);

// Non-owning view over a flat parameter vector plus its layout. Forward
// passes take views so that perturbed copies are scored without repacking.
struct ParamsView {
    std::span<const float> flat;
    const Layout* layout = nullptr;

    std::span<const float> slice(std::string_view name) const;
};

// Owning full parameter vector.
struct ModelParams {
    std::vector<float> flat;
    Layout layout;

    ParamsView view() const { return {flat, &layout}; }
    std::span<float> slice(std::string_view name);
    std::span<const float> slice(std::string_view name) const;
};

// Deterministic Gaussian init: std 0.02 everywhere, scaled by
// 1/sqrt(2 * layers) on the residual output projections (wo, wdown);
// norm gains start at exactly 1.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Fixed-width token batch with a validity mask: 1 on real tokens, 0 on pads.
struct TokenBatch {
    int rows = 0;
    int cols = 0;
    std::vector<int32_t> ids;
    std::vector<uint8_t> mask;

    std::span<const int32_t> row_ids(int r) const {
        return {ids.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
    std::span<const uint8_t> row_mask(int r) const {
        return {mask.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
};

// Per-thread scratch for the forward pass. Buffers are reused across calls;
// nothing is retained between calls except capacity. Multiple token rows are
// packed into one tall activation block so every weight matrix streams
// through the kernels once per micro-batch rather than once per row.
class ForwardWorkspace {
  public:
    // Float count of all live activation buffers for a packed block of
    // total_tokens tokens (micro_batch x max_len at the accounting peak),
    // including the transposed output head. Kept in sync with the buffers
    // below; the memory report relies on it.
    static size_t activation_floats(const ModelConfig& config, size_t total_tokens);

    // Token offset of row r in the packed logits of the last forward call.
    size_t row_offset(int r) const { return offsets_[static_cast<size_t>(r)]; }

  private:
    friend const Matrix& forward_rows(ParamsView, const ModelConfig&,
                                      std::span<const std::span<const int32_t>>,
                                      ForwardWorkspace&);

    Matrix h_;       // tokens x hidden, residual stream
    Matrix hn_;      // tokens x hidden, normed input to attn / mlp
    Matrix q_;       // tokens x q_dim
    Matrix k_;       // tokens x kv_dim
    Matrix v_;       // tokens x kv_dim
    Matrix kg_;      // row_len x head_dim, contiguous keys of one kv group
    Matrix vg_;      // row_len x head_dim, contiguous values of one kv group
    Matrix ctx_;     // tokens x q_dim, attention output before wo
    Matrix gate_;    // tokens x intermediate
    Matrix up_;      // tokens x intermediate
    Matrix logits_;  // tokens x vocab
    Matrix head_t_;  // hidden x vocab, transposed tied embedding
    std::vector<float> probs_;     // attention scores, one row
    std::vector<float> rope_cos_;  // max row length x head_dim/2
    std::vector<float> rope_sin_;
    std::vector<size_t> offsets_;  // per-row token offsets
};

// Logits for a pack of token rows, concatenated: row r occupies logits rows
// [row_offset(r), row_offset(r) + rows[r].size()). Attention is causal and
// strictly per row; packing changes nothing numerically. The returned
// reference points into the workspace and is valid until the next forward
// call. Throws NumericalError naming the layer if an activation goes
// non-finite.
const Matrix& forward_rows(ParamsView params, const ModelConfig& config,
                           std::span<const std::span<const int32_t>> rows,
                           ForwardWorkspace& ws);

// Single-row convenience: ids.size() x vocab logits.
const Matrix& forward_row(ParamsView params, const ModelConfig& config,
                          std::span<const int32_t> ids, ForwardWorkspace& ws);

// Dense logits for every row of a padded batch; one seq x vocab matrix per row.
std::vector<Matrix> forward_logits(ParamsView params, const ModelConfig& config,
                                   const TokenBatch& batch);

}  // namespace eslm

#include "eslm/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "eslm/error.hpp"
#include "eslm/rng.hpp"

namespace eslm {

namespace {

constexpr float kNormEps = 1e-6f;
constexpr int kMaxHeadDim = 256;

// Causal attention for the query head slice q (stride q_stride between
// positions) against contiguous per-group key/value copies. HD is the
// compile-time head width so the float64 dot and accumulation loops stay in
// registers.
template <int HD>
void attention_head_fixed(const float* q, size_t q_stride, const float* kg, const float* vg,
                          int seq, float scale, float* probs, float* ctx,
                          size_t ctx_stride) {
    for (int t = 0; t < seq; ++t) {
        const float* qv = q + static_cast<size_t>(t) * q_stride;
        float max_s = -INFINITY;
        for (int s = 0; s <= t; ++s) {
            const float* kv = kg + static_cast<size_t>(s) * HD;
            double dot = 0.0;
            for (int d = 0; d < HD; ++d) {
                dot += static_cast<double>(qv[d]) * kv[d];
            }
            const float sc = static_cast<float>(dot) * scale;
            probs[s] = sc;
            max_s = std::max(max_s, sc);
        }
        double denom = 0.0;
        for (int s = 0; s <= t; ++s) {
            const float e = std::exp(probs[s] - max_s);
            probs[s] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        double acc[HD] = {};
        for (int s = 0; s <= t; ++s) {
            const double p = probs[s];
            const float* vv = vg + static_cast<size_t>(s) * HD;
            for (int d = 0; d < HD; ++d) {
                acc[d] += p * vv[d];
            }
        }
        float* out = ctx + static_cast<size_t>(t) * ctx_stride;
        for (int d = 0; d < HD; ++d) {
            out[d] = static_cast<float>(acc[d]) * inv;
        }
    }
}

void attention_head_generic(const float* q, size_t q_stride, const float* kg,
                            const float* vg, int seq, int hd, float scale, float* probs,
                            float* ctx, size_t ctx_stride) {
    for (int t = 0; t < seq; ++t) {
        const float* qv = q + static_cast<size_t>(t) * q_stride;
        float max_s = -INFINITY;
        for (int s = 0; s <= t; ++s) {
            const float* kv = kg + static_cast<size_t>(s) * hd;
            double dot = 0.0;
            for (int d = 0; d < hd; ++d) {
                dot += static_cast<double>(qv[d]) * kv[d];
            }
            const float sc = static_cast<float>(dot) * scale;
            probs[s] = sc;
            max_s = std::max(max_s, sc);
        }
        double denom = 0.0;
        for (int s = 0; s <= t; ++s) {
            const float e = std::exp(probs[s] - max_s);
            probs[s] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        double acc[kMaxHeadDim] = {};
        for (int s = 0; s <= t; ++s) {
            const double p = probs[s];
            const float* vv = vg + static_cast<size_t>(s) * hd;
            for (int d = 0; d < hd; ++d) {
                acc[d] += p * vv[d];
            }
        }
        float* out = ctx + static_cast<size_t>(t) * ctx_stride;
        for (int d = 0; d < hd; ++d) {
            out[d] = static_cast<float>(acc[d]) * inv;
        }
    }
}

void attention_head(const float* q, size_t q_stride, const float* kg, const float* vg,
                    int seq, int hd, float scale, float* probs, float* ctx,
                    size_t ctx_stride) {
    switch (hd) {
        case 8: attention_head_fixed<8>(q, q_stride, kg, vg, seq, scale, probs, ctx, ctx_stride); return;
        case 16: attention_head_fixed<16>(q, q_stride, kg, vg, seq, scale, probs, ctx, ctx_stride); return;
        case 32: attention_head_fixed<32>(q, q_stride, kg, vg, seq, scale, probs, ctx, ctx_stride); return;
        case 64: attention_head_fixed<64>(q, q_stride, kg, vg, seq, scale, probs, ctx, ctx_stride); return;
        case 128: attention_head_fixed<128>(q, q_stride, kg, vg, seq, scale, probs, ctx, ctx_stride); return;
        default:
            attention_head_generic(q, q_stride, kg, vg, seq, hd, scale, probs, ctx, ctx_stride);
            return;
    }
}

bool is_norm_gain(std::string_view name) {
    return name.ends_with("norm.gain");
}

bool is_residual_output(std::string_view name) {
    return name.ends_with("attn.wo") || name.ends_with("mlp.wdown");
}

void check_finite(const Matrix& m, const char* what, int layer) {
    for (const float v : m.data()) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("forward: non-finite ") + what + " at layer " +
                                 std::to_string(layer));
        }
    }
}

// Same arithmetic as rms_norm, minus the per-call span plumbing; this runs
// once per token per norm site.
inline void rms_norm_fast(const float* x, const float* gain, int n, float* out) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        ss += static_cast<double>(x[i]) * x[i];
    }
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + kNormEps);
    for (int i = 0; i < n; ++i) {
        out[i] = static_cast<float>(gain[i] * (x[i] * inv));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (layers < 0) throw ConfigError("model: layers must be >= 0");
    if (hidden <= 0) throw ConfigError("model: hidden must be positive");
    if (heads <= 0 || head_dim <= 0) {
        throw ConfigError("model: heads and head_dim must be positive");
    }
    if (head_dim % 2 != 0) throw ConfigError("model: head_dim must be even");
    if (head_dim > kMaxHeadDim) throw ConfigError("model: head_dim too large");
    if (kv_heads <= 0 || heads % kv_heads != 0) {
        throw ConfigError("model: kv_heads must divide heads");
    }
    if (intermediate <= 0) throw ConfigError("model: intermediate must be positive");
    if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
    if (max_seq < 2) throw ConfigError("model: max_seq must be >= 2");
    if (!(rope_base > 0.0f)) throw ConfigError("model: rope_base must be positive");
}

size_t TensorInfo::size() const {
    size_t n = 1;
    for (const int d : shape) {
        n *= static_cast<size_t>(d);
    }
    return n;
}

const TensorInfo* Layout::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const TensorInfo& Layout::require(std::string_view name) const {
    const TensorInfo* t = find(name);
    if (t == nullptr) {
        throw ConfigError("layout: missing tensor " + std::string(name));
    }
    return *t;
}

Layout build_layout(const ModelConfig& config) {
    config.validate();
    Layout layout;
    size_t offset = 0;
    auto add = [&](std::string name, std::vector<int> shape) {
        TensorInfo info{std::move(name), offset, std::move(shape)};
        offset += info.size();
        layout.tensors.push_back(std::move(info));
    };
    add("embed.weight", {config.vocab, config.hidden});
    for (int l = 0; l < config.layers; ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        add(prefix + "attn_norm.gain", {config.hidden});
        add(prefix + "attn.wq", {config.hidden, config.q_dim()});
        add(prefix + "attn.wk", {config.hidden, config.kv_dim()});
        add(prefix + "attn.wv", {config.hidden, config.kv_dim()});
        add(prefix + "attn.wo", {config.q_dim(), config.hidden});
        add(prefix + "mlp_norm.gain", {config.hidden});
        add(prefix + "mlp.wgate", {config.hidden, config.intermediate});
        add(prefix + "mlp.wup", {config.hidden, config.intermediate});
        add(prefix + "mlp.wdown", {config.intermediate, config.hidden});
    }
    add("final_norm.gain", {config.hidden});
    if (!config.tie_embeddings) {
        add("lm_head.weight", {config.hidden, config.vocab});
    }
    layout.total_floats = offset;
    return layout;
}

size_t param_count(const ModelConfig& config) {
    return build_layout(config).total_floats;
}

std::span<const float> ParamsView::slice(std::string_view name) const {
    const TensorInfo& info = layout->require(name);
    return flat.subspan(info.offset, info.size());
}

std::span<float> ModelParams::slice(std::string_view name) {
    const TensorInfo& info = layout.require(name);
    return {flat.data() + info.offset, info.size()};
}

std::span<const float> ModelParams::slice(std::string_view name) const {
    const TensorInfo& info = layout.require(name);
    return {flat.data() + info.offset, info.size()};
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
    ModelParams params;
    params.layout = build_layout(config);
    params.flat.resize(params.layout.total_floats);
    const GaussianStream stream(derive_seed(seed, StreamTag::kInit));
    const float base_std = 0.02f;
    const float residual_std =
        config.layers > 0 ? base_std / std::sqrt(2.0f * static_cast<float>(config.layers))
                          : base_std;
    for (const TensorInfo& t : params.layout.tensors) {
        std::span<float> dst(params.flat.data() + t.offset, t.size());
        if (is_norm_gain(t.name)) {
            for (float& v : dst) v = 1.0f;
            continue;
        }
        // Noise is addressed by flat offset, so each slice is independent of
        // the order tensors are filled in.
        stream.fill(t.offset, dst);
        const float std_dev = is_residual_output(t.name) ? residual_std : base_std;
        for (float& v : dst) v *= std_dev;
    }
    return params;
}

size_t ForwardWorkspace::activation_floats(const ModelConfig& config, size_t total_tokens) {
    const size_t t = total_tokens;
    const size_t row = std::min<size_t>(t, static_cast<size_t>(config.max_seq));
    size_t total = 0;
    total += t * config.hidden;          // h_
    total += t * config.hidden;          // hn_
    total += t * config.q_dim();         // q_
    total += t * config.kv_dim();        // k_
    total += t * config.kv_dim();        // v_
    total += 2 * row * config.head_dim;  // kg_, vg_
    total += t * config.q_dim();         // ctx_
    total += t * config.intermediate;    // gate_
    total += t * config.intermediate;    // up_
    total += t * config.vocab;           // logits_
    total += static_cast<size_t>(config.hidden) * config.vocab;  // head_t_
    total += row;                        // probs_
    total += row * config.head_dim;      // rope tables (cos + sin)
    return total;
}

const Matrix& forward_rows(ParamsView params, const ModelConfig& config,
                           std::span<const std::span<const int32_t>> rows,
                           ForwardWorkspace& ws) {
    if (rows.empty()) {
        throw ConfigError("forward: no rows");
    }
    if (params.layout == nullptr || params.flat.size() != params.layout->total_floats) {
        throw ConfigError("forward: parameter vector does not match layout");
    }
    size_t total_sz = 0;
    int max_len = 0;
    ws.offsets_.resize(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        const int len = static_cast<int>(rows[r].size());
        if (len < 1 || len > config.max_seq) {
            throw ConfigError("forward: sequence length " + std::to_string(len) +
                              " outside [1, max_seq]");
        }
        ws.offsets_[r] = total_sz;
        total_sz += static_cast<size_t>(len);
        max_len = std::max(max_len, len);
    }
    const int total = static_cast<int>(total_sz);
    const int hidden = config.hidden;
    const int hd = config.head_dim;
    const int half = hd / 2;
    const int group = config.heads / config.kv_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    const float* flat = params.flat.data();

    std::span<const float> embed = params.slice("embed.weight");
    ws.h_.resize(total, hidden);
    {
        int t = 0;
        for (const auto& row : rows) {
            for (const int32_t id : row) {
                if (id < 0 || id >= config.vocab) {
                    throw ConfigError("forward: token id " + std::to_string(id) +
                                      " out of range");
                }
                std::memcpy(ws.h_.row(t++), embed.data() + static_cast<size_t>(id) * hidden,
                            sizeof(float) * hidden);
            }
        }
    }

    // Rope angles depend only on the in-row position; one table for the
    // longest row serves every row, both q and k, in every layer.
    ws.rope_cos_.resize(static_cast<size_t>(max_len) * half);
    ws.rope_sin_.resize(static_cast<size_t>(max_len) * half);
    for (int i = 0; i < half; ++i) {
        const double freq =
            std::pow(static_cast<double>(config.rope_base), -2.0 * i / static_cast<double>(hd));
        for (int t = 0; t < max_len; ++t) {
            const double angle = static_cast<double>(t) * freq;
            ws.rope_cos_[static_cast<size_t>(t) * half + i] = static_cast<float>(std::cos(angle));
            ws.rope_sin_[static_cast<size_t>(t) * half + i] = static_cast<float>(std::sin(angle));
        }
    }
    auto rotate_blocks = [&](Matrix& m) {
        for (size_t r = 0; r < rows.size(); ++r) {
            const int len = static_cast<int>(rows[r].size());
            for (int t = 0; t < len; ++t) {
                float* row = m.row(static_cast<int>(ws.offsets_[r]) + t);
                const float* cs = ws.rope_cos_.data() + static_cast<size_t>(t) * half;
                const float* sn = ws.rope_sin_.data() + static_cast<size_t>(t) * half;
                for (int blk = 0; blk < m.cols() / hd; ++blk) {
                    float* block = row + blk * hd;
                    for (int i = 0; i < half; ++i) {
                        const float x0 = block[2 * i];
                        const float x1 = block[2 * i + 1];
                        block[2 * i] = x0 * cs[i] - x1 * sn[i];
                        block[2 * i + 1] = x0 * sn[i] + x1 * cs[i];
                    }
                }
            }
        }
    };
    // x [total x in] times a weight slice, straight over the flat storage.
    auto project = [&](const Matrix& x, const TensorInfo& w, int out_dim, Matrix& dst,
                       bool accumulate) {
        if (!accumulate) dst.resize(total, out_dim);
        detail::matmul_raw(x.row(0), total, x.cols(), flat + w.offset, out_dim, dst.row(0),
                           accumulate);
    };
    auto rms_rows = [&](std::span<const float> gain) {
        for (int t = 0; t < total; ++t) {
            rms_norm_fast(ws.h_.row(t), gain.data(), hidden, ws.hn_.row(t));
        }
    };

    ws.hn_.resize(total, hidden);
    ws.ctx_.resize(total, config.q_dim());
    ws.probs_.resize(static_cast<size_t>(max_len));
    ws.kg_.resize(max_len, hd);
    ws.vg_.resize(max_len, hd);

    for (int layer = 0; layer < config.layers; ++layer) {
        const std::string prefix = "layers." + std::to_string(layer) + ".";
        rms_rows(params.slice(prefix + "attn_norm.gain"));

        project(ws.hn_, params.layout->require(prefix + "attn.wq"), config.q_dim(), ws.q_, false);
        project(ws.hn_, params.layout->require(prefix + "attn.wk"), config.kv_dim(), ws.k_, false);
        project(ws.hn_, params.layout->require(prefix + "attn.wv"), config.kv_dim(), ws.v_, false);

        rotate_blocks(ws.q_);
        rotate_blocks(ws.k_);

        // Causal grouped-query attention, strictly within each row. Keys and
        // values of one kv group are copied to contiguous rows once and
        // shared by the group's query heads.
        for (size_t r = 0; r < rows.size(); ++r) {
            const int len = static_cast<int>(rows[r].size());
            const int off = static_cast<int>(ws.offsets_[r]);
            for (int g = 0; g < config.kv_heads; ++g) {
                const int kv_off = g * hd;
                for (int t = 0; t < len; ++t) {
                    std::memcpy(ws.kg_.row(t), ws.k_.row(off + t) + kv_off,
                                sizeof(float) * hd);
                    std::memcpy(ws.vg_.row(t), ws.v_.row(off + t) + kv_off,
                                sizeof(float) * hd);
                }
                for (int h = g * group; h < (g + 1) * group; ++h) {
                    attention_head(ws.q_.row(off) + h * hd, static_cast<size_t>(config.q_dim()),
                                   ws.kg_.row(0), ws.vg_.row(0), len, hd, scale,
                                   ws.probs_.data(), ws.ctx_.row(off) + h * hd,
                                   static_cast<size_t>(config.q_dim()));
                }
            }
        }

        project(ws.ctx_, params.layout->require(prefix + "attn.wo"), hidden, ws.h_, true);

        rms_rows(params.slice(prefix + "mlp_norm.gain"));
        project(ws.hn_, params.layout->require(prefix + "mlp.wgate"), config.intermediate,
                ws.gate_, false);
        project(ws.hn_, params.layout->require(prefix + "mlp.wup"), config.intermediate,
                ws.up_, false);
        // SwiGLU: silu(gate) * up, written back into gate_.
        {
            float* g = ws.gate_.row(0);
            const float* u = ws.up_.row(0);
            const size_t n = static_cast<size_t>(total) * config.intermediate;
            for (size_t i = 0; i < n; ++i) {
                const float x = g[i];
                g[i] = (x / (1.0f + std::exp(-x))) * u[i];
            }
        }
        project(ws.gate_, params.layout->require(prefix + "mlp.wdown"), hidden, ws.h_, true);

        check_finite(ws.h_, "residual stream", layer);
    }

    rms_rows(params.slice("final_norm.gain"));

    if (config.tie_embeddings) {
        // Tied head: logits = h * embed^T, so transpose the embedding once
        // per call and reuse the row-major kernel.
        ws.head_t_.resize(hidden, config.vocab);
        for (int v = 0; v < config.vocab; ++v) {
            const float* src = embed.data() + static_cast<size_t>(v) * hidden;
            for (int d = 0; d < hidden; ++d) {
                ws.head_t_.at(d, v) = src[d];
            }
        }
        matmul(ws.hn_, ws.head_t_, ws.logits_);
    } else {
        const TensorInfo& wh = params.layout->require("lm_head.weight");
        ws.logits_.resize(total, config.vocab);
        detail::matmul_raw(ws.hn_.row(0), total, hidden, flat + wh.offset, config.vocab,
                           ws.logits_.row(0), false);
    }
    check_finite(ws.logits_, "logits", config.layers);
    return ws.logits_;
}

const Matrix& forward_row(ParamsView params, const ModelConfig& config,
                          std::span<const int32_t> ids, ForwardWorkspace& ws) {
    const std::span<const int32_t> rows[1] = {ids};
    return forward_rows(params, config, rows, ws);
}

std::vector<Matrix> forward_logits(ParamsView params, const ModelConfig& config,
                                   const TokenBatch& batch) {
    std::vector<Matrix> out;
    out.reserve(static_cast<size_t>(batch.rows));
    ForwardWorkspace ws;
    for (int r = 0; r < batch.rows; ++r) {
        out.push_back(forward_row(params, config, batch.row_ids(r), ws));
    }
    return out;
}

}  // namespace eslm

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "eslm/checkpoint.hpp"
#include "eslm/error.hpp"
#include "eslm/model.hpp"
#include "eslm/rng.hpp"
#include "support/oracles.hpp"

using namespace eslm;

namespace {

ModelConfig tiny_config() {
    ModelConfig config;
    config.layers = 1;
    config.hidden = 8;
    config.heads = 2;
    config.kv_heads = 1;
    config.head_dim = 4;
    config.intermediate = 16;
    config.vocab = 11;
    config.max_seq = 32;
    return config;
}

ModelConfig desk_config() {
    return ModelConfig{};  // 2 layers, hidden 64, vocab 128
}

std::vector<int32_t> ramp_ids(int n, int vocab) {
    std::vector<int32_t> ids(n);
    for (int i = 0; i < n; ++i) {
        ids[i] = (i * 7 + 3) % vocab;
    }
    return ids;
}

}  // namespace

TEST_CASE("param_count matches hand-counted layouts") {
    ModelConfig config;
    config.layers = 0;
    config.hidden = 4;
    config.heads = 1;
    config.kv_heads = 1;
    config.head_dim = 4;
    config.intermediate = 8;
    config.vocab = 10;
    config.max_seq = 4;
    config.tie_embeddings = true;
    // embedding 10x4 plus final norm gain 4
    CHECK(param_count(config) == 10 * 4 + 4);
    config.tie_embeddings = false;
    CHECK(param_count(config) == 10 * 4 + 4 + 4 * 10);
}

TEST_CASE("param_count for the 0.5B-style config lands in the expected band") {
    ModelConfig config;
    config.layers = 24;
    config.hidden = 1024;
    config.heads = 8;
    config.kv_heads = 4;
    config.head_dim = 128;
    config.intermediate = 4096;
    config.vocab = 151936;
    config.max_seq = 32768;
    config.tie_embeddings = true;
    const size_t count = param_count(config);
    CHECK(count >= 400'000'000u);
    CHECK(count <= 800'000'000u);
}

TEST_CASE("layout covers the flat vector exactly and without overlap") {
    const Layout layout = build_layout(desk_config());
    size_t expect_offset = 0;
    for (const TensorInfo& t : layout.tensors) {
        REQUIRE(t.offset == expect_offset);
        expect_offset += t.size();
    }
    CHECK(expect_offset == layout.total_floats);
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig config = desk_config();
    config.kv_heads = 3;  // does not divide heads = 4
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config = desk_config();
    config.vocab = 1;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config = desk_config();
    config.head_dim = 7;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("init_params is deterministic and shapes the right slices") {
    const ModelConfig config = desk_config();
    const ModelParams a = init_params(config, 7);
    const ModelParams b = init_params(config, 7);
    REQUIRE(a.flat.size() == b.flat.size());
    for (size_t i = 0; i < a.flat.size(); ++i) {
        REQUIRE(a.flat[i] == b.flat[i]);
    }
    const ModelParams c = init_params(config, 8);
    bool any_diff = false;
    for (size_t i = 0; i < a.flat.size(); ++i) {
        any_diff = any_diff || a.flat[i] != c.flat[i];
    }
    CHECK(any_diff);

    SUBCASE("norm gains are exactly one") {
        for (const char* name : {"layers.0.attn_norm.gain", "layers.1.mlp_norm.gain",
                                 "final_norm.gain"}) {
            for (const float v : a.slice(name)) {
                REQUIRE(v == 1.0f);
            }
        }
    }
    SUBCASE("embedding sample std is near 0.02") {
        const auto embed = a.slice("embed.weight");
        REQUIRE(embed.size() >= 8000);
        double mean = 0.0;
        for (const float v : embed) mean += v;
        mean /= static_cast<double>(embed.size());
        double var = 0.0;
        for (const float v : embed) var += (v - mean) * (v - mean);
        var /= static_cast<double>(embed.size());
        const double sd = std::sqrt(var);
        CHECK(sd >= 0.015);
        CHECK(sd <= 0.025);
    }
    SUBCASE("residual projections are scaled down by 1/sqrt(2 layers)") {
        const auto wo = a.slice("layers.0.attn.wo");
        double var = 0.0;
        for (const float v : wo) var += static_cast<double>(v) * v;
        const double sd = std::sqrt(var / static_cast<double>(wo.size()));
        const double expect = 0.02 / std::sqrt(4.0);
        CHECK(sd == doctest::Approx(expect).epsilon(0.15));
    }
}

TEST_CASE("forward logits are causal: suffix edits leave prefix logits bit-identical") {
    const ModelConfig config = desk_config();
    const ModelParams params = init_params(config, 3);
    std::vector<int32_t> ids = ramp_ids(12, config.vocab);
    ForwardWorkspace ws;
    const Matrix full = forward_row(params.view(), config, ids, ws);
    const Matrix kept = full;  // copy before the workspace is reused
    ids[9] = (ids[9] + 5) % config.vocab;
    const Matrix& edited = forward_row(params.view(), config, ids, ws);
    for (int t = 0; t < 9; ++t) {
        for (int v = 0; v < config.vocab; ++v) {
            REQUIRE(kept.at(t, v) == edited.at(t, v));
        }
    }
    bool later_changed = false;
    for (int v = 0; v < config.vocab; ++v) {
        later_changed = later_changed || kept.at(9, v) != edited.at(9, v);
    }
    CHECK(later_changed);
}

TEST_CASE("duplicated batch rows give identical logits rows") {
    const ModelConfig config = tiny_config();
    const ModelParams params = init_params(config, 5);
    TokenBatch batch;
    batch.rows = 2;
    batch.cols = 6;
    const auto ids = ramp_ids(6, config.vocab);
    batch.ids = ids;
    batch.ids.insert(batch.ids.end(), ids.begin(), ids.end());
    batch.mask.assign(12, 1);
    const auto logits = forward_logits(params.view(), config, batch);
    REQUIRE(logits.size() == 2);
    for (size_t i = 0; i < logits[0].data().size(); ++i) {
        REQUIRE(logits[0].data()[i] == logits[1].data()[i]);
    }
}

TEST_CASE("forward matches the independent scalar reimplementation") {
    SUBCASE("1-layer tiny model") {
        const ModelConfig config = tiny_config();
        const ModelParams params = init_params(config, 11);
        const auto ids = ramp_ids(7, config.vocab);
        ForwardWorkspace ws;
        const Matrix& logits = forward_row(params.view(), config, ids, ws);
        const auto expected = oracle::forward_naive(params, config, ids);
        double max_diff = 0.0;
        for (int t = 0; t < 7; ++t) {
            for (int v = 0; v < config.vocab; ++v) {
                max_diff = std::max(max_diff,
                                    std::fabs(static_cast<double>(logits.at(t, v)) -
                                              expected[t][v]));
            }
        }
        CHECK(max_diff < 1e-4);
    }
    SUBCASE("2-layer desk model with grouped-query attention") {
        const ModelConfig config = desk_config();
        const ModelParams params = init_params(config, 12);
        const auto ids = ramp_ids(9, config.vocab);
        ForwardWorkspace ws;
        const Matrix& logits = forward_row(params.view(), config, ids, ws);
        const auto expected = oracle::forward_naive(params, config, ids);
        double max_diff = 0.0;
        for (int t = 0; t < 9; ++t) {
            for (int v = 0; v < config.vocab; ++v) {
                max_diff = std::max(max_diff,
                                    std::fabs(static_cast<double>(logits.at(t, v)) -
                                              expected[t][v]));
            }
        }
        CHECK(max_diff < 1e-4);
    }
    SUBCASE("untied head") {
        ModelConfig config = tiny_config();
        config.tie_embeddings = false;
        const ModelParams params = init_params(config, 13);
        const auto ids = ramp_ids(5, config.vocab);
        ForwardWorkspace ws;
        const Matrix& logits = forward_row(params.view(), config, ids, ws);
        const auto expected = oracle::forward_naive(params, config, ids);
        for (int t = 0; t < 5; ++t) {
            for (int v = 0; v < config.vocab; ++v) {
                REQUIRE(std::fabs(static_cast<double>(logits.at(t, v)) - expected[t][v]) <
                        1e-4);
            }
        }
    }
}

TEST_CASE("forward is a pure function of its inputs") {
    const ModelConfig config = tiny_config();
    const ModelParams params = init_params(config, 21);
    const auto ids = ramp_ids(8, config.vocab);
    ForwardWorkspace ws;
    const Matrix first = forward_row(params.view(), config, ids, ws);
    // A different call in between must not leak state into the next one.
    forward_row(params.view(), config, ramp_ids(3, config.vocab), ws);
    const Matrix& second = forward_row(params.view(), config, ids, ws);
    for (size_t i = 0; i < first.data().size(); ++i) {
        REQUIRE(first.data()[i] == second.data()[i]);
    }
}

TEST_CASE("kv_heads == heads reduces bit-identically to ungrouped attention") {
    // Mirror of the forward pass with the kv-group indexing removed; with
    // kv_heads == heads both must perform the identical arithmetic.
    ModelConfig config = tiny_config();
    config.kv_heads = config.heads;
    const ModelParams params = init_params(config, 31);
    const auto ids = ramp_ids(6, config.vocab);
    ForwardWorkspace ws;
    const Matrix& logits = forward_row(params.view(), config, ids, ws);

    const int seq = static_cast<int>(ids.size());
    const int hd = config.head_dim;
    Matrix h(seq, config.hidden);
    const auto embed = params.slice("embed.weight");
    for (int t = 0; t < seq; ++t) {
        for (int d = 0; d < config.hidden; ++d) {
            h.at(t, d) = embed[static_cast<size_t>(ids[t]) * config.hidden + d];
        }
    }
    std::vector<int> positions(seq);
    for (int t = 0; t < seq; ++t) positions[t] = t;
    for (int layer = 0; layer < config.layers; ++layer) {
        const std::string prefix = "layers." + std::to_string(layer) + ".";
        Matrix hn(seq, config.hidden);
        for (int t = 0; t < seq; ++t) {
            rms_norm({h.row(t), static_cast<size_t>(config.hidden)},
                     params.slice(prefix + "attn_norm.gain"), 1e-6f,
                     {hn.row(t), static_cast<size_t>(config.hidden)});
        }
        Matrix q(seq, config.q_dim()), k(seq, config.kv_dim()), v(seq, config.kv_dim());
        const auto& layout = params.layout;
        detail::matmul_raw(hn.row(0), seq, config.hidden,
                           params.flat.data() + layout.require(prefix + "attn.wq").offset,
                           config.q_dim(), q.row(0), false);
        detail::matmul_raw(hn.row(0), seq, config.hidden,
                           params.flat.data() + layout.require(prefix + "attn.wk").offset,
                           config.kv_dim(), k.row(0), false);
        detail::matmul_raw(hn.row(0), seq, config.hidden,
                           params.flat.data() + layout.require(prefix + "attn.wv").offset,
                           config.kv_dim(), v.row(0), false);
        // Same rope table construction as the library.
        const int half = hd / 2;
        std::vector<float> cs(static_cast<size_t>(seq) * half);
        std::vector<float> sn(static_cast<size_t>(seq) * half);
        for (int i = 0; i < half; ++i) {
            const double freq = std::pow(static_cast<double>(config.rope_base),
                                         -2.0 * i / static_cast<double>(hd));
            for (int t = 0; t < seq; ++t) {
                cs[static_cast<size_t>(t) * half + i] =
                    static_cast<float>(std::cos(static_cast<double>(t) * freq));
                sn[static_cast<size_t>(t) * half + i] =
                    static_cast<float>(std::sin(static_cast<double>(t) * freq));
            }
        }
        auto rotate = [&](Matrix& m) {
            for (int t = 0; t < seq; ++t) {
                for (int blk = 0; blk < m.cols() / hd; ++blk) {
                    float* block = m.row(t) + blk * hd;
                    for (int i = 0; i < half; ++i) {
                        const float x0 = block[2 * i], x1 = block[2 * i + 1];
                        block[2 * i] = x0 * cs[static_cast<size_t>(t) * half + i] -
                                       x1 * sn[static_cast<size_t>(t) * half + i];
                        block[2 * i + 1] = x0 * sn[static_cast<size_t>(t) * half + i] +
                                           x1 * cs[static_cast<size_t>(t) * half + i];
                    }
                }
            }
        };
        rotate(q);
        rotate(k);
        Matrix ctx(seq, config.q_dim());
        std::vector<float> probs(static_cast<size_t>(seq));
        const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
        for (int head = 0; head < config.heads; ++head) {
            const int off = head * hd;  // kv index == head index, no grouping
            for (int t = 0; t < seq; ++t) {
                float max_s = -INFINITY;
                for (int s = 0; s <= t; ++s) {
                    double dot = 0.0;
                    for (int d = 0; d < hd; ++d) {
                        dot += static_cast<double>(q.at(t, off + d)) * k.at(s, off + d);
                    }
                    probs[s] = static_cast<float>(dot) * scale;
                    max_s = std::max(max_s, probs[s]);
                }
                double denom = 0.0;
                for (int s = 0; s <= t; ++s) {
                    probs[s] = std::exp(probs[s] - max_s);
                    denom += probs[s];
                }
                const float inv = static_cast<float>(1.0 / denom);
                double acc[256] = {};
                for (int s = 0; s <= t; ++s) {
                    for (int d = 0; d < hd; ++d) {
                        acc[d] += static_cast<double>(probs[s]) * v.at(s, off + d);
                    }
                }
                for (int d = 0; d < hd; ++d) {
                    ctx.at(t, off + d) = static_cast<float>(acc[d]) * inv;
                }
            }
        }
        detail::matmul_raw(ctx.row(0), seq, config.q_dim(),
                           params.flat.data() + layout.require(prefix + "attn.wo").offset,
                           config.hidden, h.row(0), true);
        for (int t = 0; t < seq; ++t) {
            rms_norm({h.row(t), static_cast<size_t>(config.hidden)},
                     params.slice(prefix + "mlp_norm.gain"), 1e-6f,
                     {hn.row(t), static_cast<size_t>(config.hidden)});
        }
        Matrix gate(seq, config.intermediate), up(seq, config.intermediate);
        detail::matmul_raw(hn.row(0), seq, config.hidden,
                           params.flat.data() + layout.require(prefix + "mlp.wgate").offset,
                           config.intermediate, gate.row(0), false);
        detail::matmul_raw(hn.row(0), seq, config.hidden,
                           params.flat.data() + layout.require(prefix + "mlp.wup").offset,
                           config.intermediate, up.row(0), false);
        for (size_t i = 0; i < gate.data().size(); ++i) {
            const float x = gate.data()[i];
            gate.data()[i] = (x / (1.0f + std::exp(-x))) * up.data()[i];
        }
        detail::matmul_raw(gate.row(0), seq, config.intermediate,
                           params.flat.data() + layout.require(prefix + "mlp.wdown").offset,
                           config.hidden, h.row(0), true);
    }
    Matrix hn(seq, config.hidden);
    for (int t = 0; t < seq; ++t) {
        rms_norm({h.row(t), static_cast<size_t>(config.hidden)}, params.slice("final_norm.gain"),
                 1e-6f, {hn.row(t), static_cast<size_t>(config.hidden)});
    }
    Matrix head_t(config.hidden, config.vocab);
    for (int vt = 0; vt < config.vocab; ++vt) {
        for (int d = 0; d < config.hidden; ++d) {
            head_t.at(d, vt) = embed[static_cast<size_t>(vt) * config.hidden + d];
        }
    }
    const Matrix expected = matmul(hn, head_t);
    for (int t = 0; t < seq; ++t) {
        for (int vt = 0; vt < config.vocab; ++vt) {
            REQUIRE(logits.at(t, vt) == expected.at(t, vt));
        }
    }
}

TEST_CASE("forward rejects bad inputs") {
    const ModelConfig config = tiny_config();
    const ModelParams params = init_params(config, 41);
    ForwardWorkspace ws;
    std::vector<int32_t> too_long(config.max_seq + 1, 1);
    CHECK_THROWS_AS(forward_row(params.view(), config, too_long, ws), ConfigError);
    std::vector<int32_t> bad_id = {1, 2, static_cast<int32_t>(config.vocab)};
    CHECK_THROWS_AS(forward_row(params.view(), config, bad_id, ws), ConfigError);
}

TEST_CASE("forward reports the layer of a numerical blowup") {
    const ModelConfig config = tiny_config();
    ModelParams params = init_params(config, 51);
    // The squared gate*up product overflows float32 whatever the sign of the
    // normed activations.
    auto gate = params.slice("layers.0.mlp.wgate");
    for (size_t i = 0; i < gate.size(); ++i) {
        gate[i] = i % 2 == 0 ? 1e38f : -1e38f;
    }
    for (float& v : params.slice("layers.0.mlp.wup")) {
        v = 1e38f;
    }
    ForwardWorkspace ws;
    const auto ids = ramp_ids(4, config.vocab);
    CHECK_THROWS_WITH_AS(forward_row(params.view(), config, ids, ws),
                         doctest::Contains("layer 0"), NumericalError);
}

TEST_CASE("checkpoint round trip is byte-exact") {
    namespace fs = std::filesystem;
    const ModelConfig config = tiny_config();
    const ModelParams params = init_params(config, 61);
    const fs::path dir = fs::temp_directory_path() / "eslm_ckpt_test";
    fs::create_directories(dir);
    const std::string p1 = (dir / "a.ckpt").string();
    const std::string p2 = (dir / "b.ckpt").string();
    save_checkpoint(p1, config, 42, params);
    const Checkpoint loaded = load_checkpoint(p1);
    CHECK(loaded.iteration == 42);
    CHECK(loaded.config.hidden == config.hidden);
    CHECK(loaded.config.tie_embeddings == config.tie_embeddings);
    REQUIRE(loaded.params.flat.size() == params.flat.size());
    for (size_t i = 0; i < params.flat.size(); ++i) {
        REQUIRE(loaded.params.flat[i] == params.flat[i]);
    }
    save_checkpoint(p2, loaded.config, loaded.iteration, loaded.params);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(!s1.str().empty());
    fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects garbage") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "eslm_ckpt_bad";
    fs::create_directories(dir);
    const std::string path = (dir / "bad.ckpt").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), ConfigError);
    fs::remove_all(dir);
}

#include "eslm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>

#include "eslm/error.hpp"
#include "eslm/rng.hpp"

namespace eslm {

TokenizerKind tokenizer_from_string(std::string_view name) {
    if (name == "byte") return TokenizerKind::kByte;
    if (name == "char128") return TokenizerKind::kChar128;
    throw ConfigError("tokenizer: unknown kind '" + std::string(name) +
                      "' (expected byte or char128)");
}

std::string_view tokenizer_to_string(TokenizerKind kind) {
    return kind == TokenizerKind::kByte ? "byte" : "char128";
}

int tokenizer_vocab(TokenizerKind kind) {
    return kind == TokenizerKind::kByte ? 256 : 128;
}

std::vector<int32_t> tokenize_line(std::string_view line, TokenizerKind kind) {
    std::vector<int32_t> ids;
    ids.reserve(line.size());
    for (const char c : line) {
        const auto b = static_cast<unsigned char>(c);
        if (kind == TokenizerKind::kByte) {
            ids.push_back(static_cast<int32_t>(b));
        } else {
            ids.push_back(b < 128 ? static_cast<int32_t>(std::tolower(b))
                                  : static_cast<int32_t>('?'));
        }
    }
    return ids;
}

Corpus ingest(std::istream& text, TokenizerKind kind, int line_cap) {
    if (line_cap < 1) {
        throw ConfigError("ingest: line_cap must be >= 1");
    }
    Corpus corpus;
    corpus.vocab = tokenizer_vocab(kind);
    corpus.line_cap = line_cap;
    std::string line;
    while (static_cast<int>(corpus.sequences.size()) < line_cap && std::getline(text, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        corpus.sequences.push_back(tokenize_line(line, kind));
    }
    if (corpus.sequences.empty()) {
        throw ConfigError("ingest: no nonempty lines in corpus");
    }
    return corpus;
}

Corpus ingest_file(const std::string& path, TokenizerKind kind, int line_cap) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("ingest: cannot open corpus file: " + path);
    }
    return ingest(in, kind, line_cap);
}

SubsetPlan sample_subset(uint64_t master_seed, uint64_t iteration, size_t corpus_size,
                         size_t m) {
    if (m < 1 || m > corpus_size) {
        throw ConfigError("sample_subset: need 1 <= m <= corpus_size, got m=" +
                          std::to_string(m) + " corpus_size=" + std::to_string(corpus_size));
    }
    UniformStream stream(derive_seed(master_seed, StreamTag::kSubset, iteration));
    // Partial Fisher-Yates: after m swaps the prefix holds m distinct
    // uniform draws without replacement.
    std::vector<size_t> pool(corpus_size);
    std::iota(pool.begin(), pool.end(), size_t{0});
    SubsetPlan plan;
    plan.iteration = iteration;
    plan.indices.resize(m);
    for (size_t i = 0; i < m; ++i) {
        const size_t j = i + static_cast<size_t>(stream.next_below(corpus_size - i));
        std::swap(pool[i], pool[j]);
        plan.indices[i] = pool[i];
    }
    return plan;
}

TokenBatch pack_batch(const Corpus& corpus, std::span<const size_t> indices, int max_len) {
    if (max_len < 2) {
        throw ConfigError("pack_batch: max_len must be >= 2");
    }
    std::vector<size_t> kept;
    kept.reserve(indices.size());
    for (const size_t idx : indices) {
        if (idx >= corpus.sequences.size()) {
            throw ConfigError("pack_batch: index " + std::to_string(idx) + " out of range");
        }
        if (corpus.sequences[idx].size() < 2) {
            std::fprintf(stderr, "warning: pack_batch: skipping sequence %zu (< 2 tokens)\n",
                         idx);
            continue;
        }
        kept.push_back(idx);
    }
    if (kept.empty()) {
        throw DataError("pack_batch: no sequence with at least 2 tokens selected");
    }
    TokenBatch batch;
    batch.rows = static_cast<int>(kept.size());
    batch.cols = max_len;
    batch.ids.assign(static_cast<size_t>(batch.rows) * max_len, 0);
    batch.mask.assign(static_cast<size_t>(batch.rows) * max_len, 0);
    for (int r = 0; r < batch.rows; ++r) {
        const std::vector<int32_t>& seq = corpus.sequences[kept[r]];
        const int len = std::min<int>(static_cast<int>(seq.size()), max_len);
        std::copy_n(seq.begin(), len, batch.ids.begin() + static_cast<size_t>(r) * max_len);
        std::fill_n(batch.mask.begin() + static_cast<size_t>(r) * max_len, len, uint8_t{1});
    }
    return batch;
}

}  // namespace eslm

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eslm/model.hpp"

namespace eslm {

// Byte: raw bytes, vocab 256. Char128: ASCII lowercased, anything outside
// 7-bit ASCII mapped to '?', vocab 128. Pad id 0 is a valid token in both;
// correctness relies on the batch mask alone.
enum class TokenizerKind { kByte, kChar128 };

TokenizerKind tokenizer_from_string(std::string_view name);
std::string_view tokenizer_to_string(TokenizerKind kind);
int tokenizer_vocab(TokenizerKind kind);
std::vector<int32_t> tokenize_line(std::string_view line, TokenizerKind kind);

// One tokenized sequence per nonempty input line.
struct Corpus {
    std::vector<std::vector<int32_t>> sequences;
    int vocab = 0;
    int line_cap = 0;

    size_t size() const { return sequences.size(); }
};

Corpus ingest(std::istream& text, TokenizerKind kind, int line_cap);
Corpus ingest_file(const std::string& path, TokenizerKind kind, int line_cap);

// The indices every worker evaluates this iteration. Being a pure function
// of (master_seed, iteration), every process computes the same plan with no
// communication.
struct SubsetPlan {
    uint64_t iteration = 0;
    std::vector<size_t> indices;
};

// m distinct indices drawn uniformly from [0, corpus_size).
SubsetPlan sample_subset(uint64_t master_seed, uint64_t iteration, size_t corpus_size,
                         size_t m);

// Packs the selected sequences into a fixed-width batch: truncation to
// max_len, right padding with id 0, mask 1 on real tokens. Sequences shorter
// than two tokens are skipped with a warning on stderr.
TokenBatch pack_batch(const Corpus& corpus, std::span<const size_t> indices, int max_len);

}  // namespace eslm

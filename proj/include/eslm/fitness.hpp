#pragma once

#include <cstdint>
#include <span>

#include "eslm/data.hpp"
#include "eslm/model.hpp"

namespace eslm {

// Mean log-probability of the true next token, in nats per scored token.
// Always <= 0; exactly 0 only for a perfect predictor. The training loss is
// -value.
struct FitnessValue {
    double value = 0.0;
    int64_t tokens_scored = 0;
};

// Per-sequence reward. Position t's logits are scored against the label id
// at t+1, weighted by the label position's mask, and averaged over the mask
// count. Throws DataError if no position is scored.
FitnessValue sequence_reward(const Matrix& logits, std::span<const int32_t> ids,
                             std::span<const uint8_t> mask);

// Unweighted mean of per-sequence rewards: every sequence contributes
// equally regardless of its token count. Forward passes run in micro-batches
// of micro_batch rows; an external workspace may be supplied to reuse
// buffers across calls.
FitnessValue batch_fitness(ParamsView params, const ModelConfig& config,
                           const TokenBatch& batch, int micro_batch,
                           ForwardWorkspace* ws = nullptr);

// batch_fitness over the packed subset. All population members of one
// iteration must be scored with the same plan.
FitnessValue subset_fitness(ParamsView params, const ModelConfig& config, const Corpus& corpus,
                            const SubsetPlan& plan, int max_len, int micro_batch,
                            ForwardWorkspace* ws = nullptr);

}  // namespace eslm

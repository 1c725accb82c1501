#include "eslm/fitness.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eslm/error.hpp"

namespace eslm {

namespace {

// Reward over the leading `len` positions of a row whose logits start at
// `logits` (vocab floats per position), reading only positions that carry a
// scored label.
FitnessValue reward_from_logits(const float* logits, int vocab, std::span<const int32_t> ids,
                                std::span<const uint8_t> mask, int len) {
    double sum = 0.0;
    int64_t scored = 0;
    for (int t = 0; t + 1 < len; ++t) {
        if (mask[t + 1] == 0) {
            continue;
        }
        const int32_t label = ids[t + 1];
        const float* row = logits + static_cast<size_t>(t) * vocab;
        float max_v = row[0];
        for (int v = 1; v < vocab; ++v) {
            max_v = std::max(max_v, row[v]);
        }
        double denom = 0.0;
        for (int v = 0; v < vocab; ++v) {
            denom += std::exp(static_cast<double>(row[v]) - max_v);
        }
        sum += static_cast<double>(row[label]) - max_v - std::log(denom);
        ++scored;
    }
    if (scored == 0) {
        throw DataError("sequence_reward: no scored positions (mask selects nothing)");
    }
    return {sum / static_cast<double>(scored), scored};
}

// Positions after the last mask=1 entry contribute nothing: their labels are
// unmasked and, by causality, dropping them leaves earlier logits
// bit-identical. Forwarding only the scored prefix is therefore exact.
int scored_prefix_len(std::span<const uint8_t> mask) {
    int len = static_cast<int>(mask.size());
    while (len > 0 && mask[len - 1] == 0) {
        --len;
    }
    return len;
}

}  // namespace

FitnessValue sequence_reward(const Matrix& logits, std::span<const int32_t> ids,
                             std::span<const uint8_t> mask) {
    if (ids.size() != mask.size() || static_cast<int>(ids.size()) != logits.rows()) {
        throw ConfigError("sequence_reward: ids, mask and logits rows must agree");
    }
    if (ids.size() < 2) {
        throw DataError("sequence_reward: need at least 2 positions");
    }
    return reward_from_logits(logits.row(0), logits.cols(), ids, mask,
                              static_cast<int>(ids.size()));
}

FitnessValue batch_fitness(ParamsView params, const ModelConfig& config,
                           const TokenBatch& batch, int micro_batch, ForwardWorkspace* ws) {
    if (batch.rows < 1) {
        throw DataError("batch_fitness: empty batch");
    }
    if (micro_batch < 1) {
        throw ConfigError("batch_fitness: micro_batch must be >= 1");
    }
    ForwardWorkspace local;
    ForwardWorkspace& wsr = ws != nullptr ? *ws : local;
    double sum = 0.0;
    int64_t scored = 0;
    std::vector<std::span<const int32_t>> rows;
    rows.reserve(static_cast<size_t>(micro_batch));
    for (int start = 0; start < batch.rows; start += micro_batch) {
        const int end = std::min(batch.rows, start + micro_batch);
        rows.clear();
        for (int r = start; r < end; ++r) {
            const int len = scored_prefix_len(batch.row_mask(r));
            if (len < 2) {
                throw DataError("batch_fitness: row " + std::to_string(r) +
                                " has no scorable positions");
            }
            rows.push_back(batch.row_ids(r).first(len));
        }
        try {
            const Matrix& logits = forward_rows(params, config, rows, wsr);
            for (int r = start; r < end; ++r) {
                const FitnessValue fv = reward_from_logits(
                    logits.row(static_cast<int>(wsr.row_offset(r - start))), config.vocab,
                    batch.row_ids(r), batch.row_mask(r),
                    static_cast<int>(rows[static_cast<size_t>(r - start)].size()));
                sum += fv.value;
                scored += fv.tokens_scored;
            }
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (batch rows " +
                                 std::to_string(start) + ".." + std::to_string(end - 1) + ")");
        }
    }
    return {sum / static_cast<double>(batch.rows), scored};
}

FitnessValue subset_fitness(ParamsView params, const ModelConfig& config, const Corpus& corpus,
                            const SubsetPlan& plan, int max_len, int micro_batch,
                            ForwardWorkspace* ws) {
    const TokenBatch batch = pack_batch(corpus, plan.indices, max_len);
    return batch_fitness(params, config, batch, micro_batch, ws);
}

}  // namespace eslm

#pragma once

#include <cstddef>
#include <iosfwd>

#include "eslm/es.hpp"
#include "eslm/model.hpp"

namespace eslm {

// Analytic accounting of parameter-scale training state, in floats.
//
// ES side: the parameter vector, one regenerated noise chunk, and one
// update-accumulator chunk; perturbations are regenerated from seeds and
// never stored, so population size does not appear. Activations are one
// packed forward workspace of micro_batch x max_seq_len tokens.
//
// Gradient baseline: an Adam pipeline holding parameters, gradients, and two
// moment vectors (4 |theta| of optimizer-scale state), plus stored per-layer
// forward activations for a full micro-batch, as backprop without
// checkpointing requires: block input and normed input, q/k/v, attention
// probabilities, attention output, both MLP branches, and the final logits.
struct MemoryReport {
    size_t param_floats = 0;
    size_t noise_chunk_floats = 0;

    size_t es_state_floats = 0;       // params + 2 * noise_chunk
    size_t es_activation_floats = 0;  // one micro-batch forward workspace
    size_t es_total_floats = 0;

    size_t grad_state_floats = 0;       // 4 * params
    size_t grad_activation_floats = 0;  // stored activations for one micro-batch
    size_t grad_total_floats = 0;

    double state_ratio = 0.0;  // grad_state / es_state, activations excluded
    double total_ratio = 0.0;
};

MemoryReport memory_report(const ModelConfig& model, const EsConfig& es, int micro_batch,
                           int max_seq_len);

void print_memory_report(const MemoryReport& report, std::ostream& out);

}  // namespace eslm

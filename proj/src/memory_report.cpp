#include "eslm/memory_report.hpp"

#include <ostream>

namespace eslm {

namespace {

double mib(size_t floats) {
    return static_cast<double>(floats) * sizeof(float) / (1024.0 * 1024.0);
}

}  // namespace

MemoryReport memory_report(const ModelConfig& model, const EsConfig& es, int micro_batch,
                           int max_seq_len) {
    model.validate();
    es.validate();
    MemoryReport r;
    r.param_floats = param_count(model);
    r.noise_chunk_floats = es.noise_chunk;

    r.es_state_floats = r.param_floats + 2 * r.noise_chunk_floats;
    r.es_activation_floats = ForwardWorkspace::activation_floats(
        model, static_cast<size_t>(micro_batch) * max_seq_len);
    r.es_total_floats = r.es_state_floats + r.es_activation_floats;

    const size_t batch_tokens = static_cast<size_t>(micro_batch) * max_seq_len;
    // Stored per token per layer: h, hn, q, k, v, attention context, gate,
    // up; attention probabilities are one row of max_seq_len per head.
    const size_t per_token_per_layer = static_cast<size_t>(2 * model.hidden) +
                                       2 * model.q_dim() + 2 * model.kv_dim() +
                                       2 * model.intermediate +
                                       static_cast<size_t>(model.heads) * max_seq_len;
    r.grad_state_floats = 4 * r.param_floats;
    r.grad_activation_floats =
        batch_tokens * per_token_per_layer * static_cast<size_t>(model.layers) +
        batch_tokens * static_cast<size_t>(2 * model.vocab)  // logits + softmax
        + batch_tokens * static_cast<size_t>(model.hidden);  // final norm output
    r.grad_total_floats = r.grad_state_floats + r.grad_activation_floats;

    r.state_ratio =
        static_cast<double>(r.grad_state_floats) / static_cast<double>(r.es_state_floats);
    r.total_ratio =
        static_cast<double>(r.grad_total_floats) / static_cast<double>(r.es_total_floats);
    return r;
}

void print_memory_report(const MemoryReport& r, std::ostream& out) {
    out << "memory accounting (floats; 4 bytes each)\n";
    out << "  parameters:            " << r.param_floats << "  (" << mib(r.param_floats)
        << " MiB)\n";
    out << "  ES optimizer state:    " << r.es_state_floats << "  (" << mib(r.es_state_floats)
        << " MiB)  [params + 2 x noise chunk of " << r.noise_chunk_floats << "]\n";
    out << "  ES activations:        " << r.es_activation_floats << "  ("
        << mib(r.es_activation_floats) << " MiB)  [one micro-batch forward]\n";
    out << "  ES total:              " << r.es_total_floats << "  (" << mib(r.es_total_floats)
        << " MiB)\n";
    out << "  grad optimizer state:  " << r.grad_state_floats << "  ("
        << mib(r.grad_state_floats) << " MiB)  [params + grads + 2 Adam moments]\n";
    out << "  grad activations:      " << r.grad_activation_floats << "  ("
        << mib(r.grad_activation_floats) << " MiB)  [stored per-layer, full micro-batch]\n";
    out << "  grad total:            " << r.grad_total_floats << "  ("
        << mib(r.grad_total_floats) << " MiB)\n";
    out << "  state ratio (grad/ES, no activations): " << r.state_ratio << "\n";
    out << "  total ratio (grad/ES):                 " << r.total_ratio << "\n";
}

}  // namespace eslm

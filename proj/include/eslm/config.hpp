#pragma once

#include <cstdint>
#include <string>

#include "eslm/data.hpp"
#include "eslm/es.hpp"
#include "eslm/model.hpp"

namespace eslm {

struct DataConfig {
    std::string corpus_path;
    int line_cap = 10000;
    int max_seq_len = 256;
    TokenizerKind tokenizer = TokenizerKind::kByte;
};

struct RunnerConfig {
    int iterations = 1000;
    size_t eval_samples = 5000;  // subset size M per iteration
    int micro_batch = 16;
    uint64_t master_seed = 0;
    int checkpoint_every = 100;  // 0 disables intermediate checkpoints
    std::string output_dir;
};

struct RunConfig {
    ModelConfig model;
    EsConfig es;
    DataConfig data;
    RunnerConfig run;

    void validate() const;
};

// Reads a JSON config file. Unknown keys are rejected so typos fail loudly.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Fully resolved config, defaults included, as pretty-printed JSON.
std::string dump_run_config(const RunConfig& config);

}  // namespace eslm

#pragma once

#include <cstdint>
#include <string>

#include "eslm/model.hpp"

namespace eslm {

// Checkpoint file layout (all integers little-endian):
//   "ESLM" | u32 version | u64 iteration | model config fields |
//   u32 tensor count | per tensor: u16 name length, name bytes, u64 offset,
//   u8 ndim, u32 dims... | u64 flat length | raw float32 data.
// save(load(f)) reproduces f byte for byte.

struct Checkpoint {
    ModelConfig config;
    uint64_t iteration = 0;
    ModelParams params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config, uint64_t iteration,
                     const ModelParams& params);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace eslm

#pragma once

#include <cstdint>
#include <span>

namespace eslm {

// SplitMix64 finalizer. Bijective on 64-bit integers, so seeds derived from
// consecutive inputs are guaranteed distinct.
uint64_t splitmix64(uint64_t x);

// Tags separating the independent random substreams derived from one master
// seed. Values are part of the reproducibility contract; never reorder.
enum class StreamTag : uint64_t {
    kInit = 1,    // parameter initialization
    kNoise = 2,   // population perturbation seeds
    kSubset = 3,  // per-iteration corpus subset
};

uint64_t derive_seed(uint64_t master_seed, StreamTag tag, uint64_t a = 0, uint64_t b = 0);

// Philox4x32-10 counter-based generator. A (key, block index) pair maps to
// four 32-bit words; there is no sequential state, so any block can be
// regenerated independently on any thread.
class Philox4x32 {
  public:
    explicit Philox4x32(uint64_t key)
        : key0_(static_cast<uint32_t>(key)), key1_(static_cast<uint32_t>(key >> 32)) {}

    void block(uint64_t index, uint32_t out[4]) const;

  private:
    uint32_t key0_;
    uint32_t key1_;
};

// Standard-normal stream addressable by element index. Each Philox block
// yields four values via Box-Muller, so index i lives in block i/4 and any
// subrange can be regenerated without streaming from the start. The mapping
// from (key, index) to value is fixed; chunked consumers see the same noise
// regardless of chunk size.
class GaussianStream {
  public:
    explicit GaussianStream(uint64_t key) : philox_(key) {}

    // Writes the values for indices [start, start + out.size()).
    void fill(uint64_t start, std::span<float> out) const;

    float at(uint64_t index) const;

  private:
    void block_values(uint64_t block, float out[4]) const;

    Philox4x32 philox_;
};

// Sequential uniform draws over the same Philox core.
class UniformStream {
  public:
    explicit UniformStream(uint64_t key) : philox_(key) {}

    uint32_t next_u32();
    uint64_t next_u64();

    // Unbiased draw from [0, bound) by rejection; bound >= 1.
    uint64_t next_below(uint64_t bound);

  private:
    Philox4x32 philox_;
    uint64_t next_block_ = 0;
    uint32_t buf_[4] = {};
    int pos_ = 4;
};

}  // namespace eslm

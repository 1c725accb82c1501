#include "eslm/rng.hpp"

#include <cmath>

namespace eslm {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

// One uniform in (0, 1); the +0.5 offset keeps log() away from zero.
inline double u32_to_unit(uint32_t x) {
    return (static_cast<double>(x) + 0.5) * 0x1p-32;
}

}  // namespace

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master_seed, StreamTag tag, uint64_t a, uint64_t b) {
    uint64_t s = splitmix64(master_seed ^ (static_cast<uint64_t>(tag) * 0xA24BAED4963EE407ull));
    s = splitmix64(s ^ (a * 0x9FB21C651E98DF25ull));
    return splitmix64(s ^ (b * 0xD6E8FEB86659FD93ull));
}

void Philox4x32::block(uint64_t index, uint32_t out[4]) const {
    uint32_t c0 = static_cast<uint32_t>(index);
    uint32_t c1 = static_cast<uint32_t>(index >> 32);
    uint32_t c2 = 0;
    uint32_t c3 = 0;
    uint32_t k0 = key0_;
    uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, c0, hi0, lo0);
        mulhilo(kPhiloxM1, c2, hi1, lo1);
        const uint32_t n0 = hi1 ^ c1 ^ k0;
        const uint32_t n1 = lo1;
        const uint32_t n2 = hi0 ^ c3 ^ k1;
        const uint32_t n3 = lo0;
        c0 = n0;
        c1 = n1;
        c2 = n2;
        c3 = n3;
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
}

void GaussianStream::block_values(uint64_t block, float out[4]) const {
    uint32_t w[4];
    philox_.block(block, w);
    const double r0 = std::sqrt(-2.0 * std::log(u32_to_unit(w[0])));
    const double a0 = 2.0 * M_PI * u32_to_unit(w[1]);
    const double r1 = std::sqrt(-2.0 * std::log(u32_to_unit(w[2])));
    const double a1 = 2.0 * M_PI * u32_to_unit(w[3]);
    out[0] = static_cast<float>(r0 * std::cos(a0));
    out[1] = static_cast<float>(r0 * std::sin(a0));
    out[2] = static_cast<float>(r1 * std::cos(a1));
    out[3] = static_cast<float>(r1 * std::sin(a1));
}

void GaussianStream::fill(uint64_t start, std::span<float> out) const {
    size_t written = 0;
    uint64_t index = start;
    float vals[4];
    // Leading partial block.
    if (index % 4 != 0 && written < out.size()) {
        block_values(index / 4, vals);
        while (index % 4 != 0 && written < out.size()) {
            out[written++] = vals[index % 4];
            ++index;
        }
    }
    // Whole blocks.
    while (out.size() - written >= 4) {
        block_values(index / 4, &out[written]);
        written += 4;
        index += 4;
    }
    // Trailing partial block.
    if (written < out.size()) {
        block_values(index / 4, vals);
        while (written < out.size()) {
            out[written++] = vals[index % 4];
            ++index;
        }
    }
}

float GaussianStream::at(uint64_t index) const {
    float vals[4];
    block_values(index / 4, vals);
    return vals[index % 4];
}

uint32_t UniformStream::next_u32() {
    if (pos_ == 4) {
        philox_.block(next_block_++, buf_);
        pos_ = 0;
    }
    return buf_[pos_++];
}

uint64_t UniformStream::next_u64() {
    const uint64_t hi = next_u32();
    const uint64_t lo = next_u32();
    return (hi << 32) | lo;
}

uint64_t UniformStream::next_below(uint64_t bound) {
    // Rejection sampling over the largest multiple of bound.
    const uint64_t limit = bound * (~0ull / bound);
    uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % bound;
}

}  // namespace eslm

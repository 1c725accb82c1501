#pragma once

// Deliberately naive reference implementations for the test and acceptance
// suites. Straight-line float64 loops, no code shared with the library
// under test: agreement between the two is evidence, not tautology.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eslm/model.hpp"

namespace eslm::oracle {

struct OracleReport {
    std::string name;
    std::string metric;  // e.g. "max-abs-diff", "cosine", "freq-deviation"
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

OracleReport make_report(std::string name, std::string metric, double value,
                         double threshold, bool pass_if_below);

// Mean masked log-probability of the next token, recomputed from scratch.
// logits[t][v]; pair (t, t+1) is scored when mask[t+1] == 1.
double scalar_reward(const std::vector<std::vector<double>>& logits,
                     std::span<const int32_t> ids, std::span<const uint8_t> mask);

// Central differences, (f(x + h e_i) - f(x - h e_i)) / 2h. Dimension capped
// at 200; this is test-scale code.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> theta, double h);

// Exact mean of subset_value over all C(n, m) index subsets of [0, n).
// Guarded to at most 10^4 subsets.
double exhaustive_subset_mean(size_t n, size_t m,
                              const std::function<double(std::span<const size_t>)>& subset_value);

// Triple-loop matrix product in float64.
std::vector<double> matmul_naive(std::span<const float> a, int m, int k,
                                 std::span<const float> b, int n);

// Direct high-precision log-softmax (long double).
std::vector<double> log_softmax_naive(std::span<const float> logits);

// Scalar float64 re-implementation of the transformer forward pass, reading
// weights by layout name. Returns logits[t][v] for one token row.
std::vector<std::vector<double>> forward_naive(const ModelParams& params,
                                               const ModelConfig& config,
                                               std::span<const int32_t> ids);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace eslm::oracle

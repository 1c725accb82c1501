#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eslm/model.hpp"

namespace eslm {

enum class Normalization { kZScore, kRank };

Normalization normalization_from_string(std::string_view name);
std::string_view normalization_to_string(Normalization n);

// Per-tensor-name-pattern scalar factors on step size and noise scale.
// Patterns use '*' as a wildcard; the first matching pattern wins.
struct GroupMultiplier {
    std::string pattern;
    double alpha = 1.0;
    double sigma = 1.0;
};

struct EsConfig {
    int population = 30;
    double sigma = 1e-3;
    double alpha = 5e-4;
    bool antithetic = false;
    bool nes_scaling = false;  // update scaled by alpha/sigma instead of alpha
    Normalization normalization = Normalization::kZScore;
    double gamma_alpha = 1.0;
    double gamma_sigma = 1.0;
    int step_alpha = 0;  // 0 disables the alpha decay schedule
    int step_sigma = 0;
    std::vector<GroupMultiplier> group_multipliers;
    size_t noise_chunk = size_t{1} << 20;  // floats regenerated per pass
    int workers = 1;
    bool eval_center = false;  // also score the unperturbed center each step

    void validate() const;
};

// A population member is a (seed, sign) pair; the full noise vector is
// regenerated from the seed on demand and never stored. Antithetic partners
// share a seed and differ only in sign.
struct Ticket {
    uint64_t seed = 0;
    int sign = +1;
};

// Rewards aligned positionally with the tickets that produced them.
struct RewardVector {
    std::vector<double> rewards;
    std::vector<Ticket> tickets;
};

// Group multipliers resolved against a concrete layout: an ordered,
// contiguous cover of [0, total) with per-range factors.
struct GroupScales {
    struct Range {
        size_t offset = 0;
        size_t length = 0;
        double alpha_mult = 1.0;
        double sigma_mult = 1.0;
    };
    std::vector<Range> ranges;

    size_t total() const;
    static GroupScales uniform(size_t total_floats);
    static GroupScales resolve(const Layout& layout,
                               const std::vector<GroupMultiplier>& multipliers);
};

// Glob-style match with '*' wildcards.
bool pattern_match(std::string_view pattern, std::string_view name);

// N tickets, a pure function of (master_seed, iteration). With antithetic
// pairing the list is N/2 seed pairs with signs (+, -).
std::vector<Ticket> make_tickets(uint64_t master_seed, uint64_t iteration,
                                 const EsConfig& config);

// Entries whose original bits an additive inverse cannot reproduce (float
// rounding is not exactly invertible); recorded during perturbation and
// patched back on undo so the round trip is bit-exact.
struct PerturbUndo {
    std::vector<std::pair<size_t, float>> lossy;
};

// flat[i] += sign * sigma_t * sigma_mult(i) * eps[i], with eps regenerated
// from the ticket seed by flat index. When `undo` is given, records what
// unperturb_in_place needs for a bit-exact restore.
void perturb_in_place(std::span<float> flat, const Ticket& ticket, double sigma_t,
                      const GroupScales& scales, size_t noise_chunk,
                      PerturbUndo* undo = nullptr);

// Subtracts the identical quantities and patches the recorded lossy entries;
// the result is bit-identical to the pre-perturbation vector.
void unperturb_in_place(std::span<float> flat, const Ticket& ticket, double sigma_t,
                        const GroupScales& scales, size_t noise_chunk,
                        const PerturbUndo& undo);

// w_j = (r_j - mean) / (population std + 1e-8)
std::vector<double> zscore_weights(const RewardVector& rewards);

// w_j = 2 * rank(r_j) / (N-1) - 1, ranks 0..N-1 ascending; ties keep the
// lower original index on the lower rank.
std::vector<double> rank_weights(const RewardVector& rewards);

// base * gamma^floor(iteration / step); base unchanged when step == 0.
double scheduled(double base, uint64_t iteration, double gamma, int step);

struct UpdateStats {
    double l2 = 0.0;
    double max_abs = 0.0;
};

// theta += scale * (1/N) * sum_j w_j eps_j, streaming each eps_j once per
// chunk; scale is alpha_t (or alpha_t/sigma_t under NES scaling) times the
// per-range alpha multiplier. Never materializes more than one noise chunk.
// A non-finite update leaves theta untouched and throws NumericalError.
UpdateStats aggregate_update(std::span<float> flat, const std::vector<Ticket>& tickets,
                             std::span<const double> weights, const EsConfig& config,
                             const GroupScales& scales, double sigma_t, double alpha_t);

struct StepResult {
    RewardVector population;
    double reward_mean = 0.0;
    double reward_max = 0.0;
    double reward_min = 0.0;
    double sigma_t = 0.0;
    double alpha_t = 0.0;
    UpdateStats update;
    int clamped_members = 0;    // non-finite rewards clamped to the population min
    bool has_center = false;
    double center_reward = 0.0;
};

// Fitness of one parameter vector; must be safe to call concurrently on
// distinct vectors.
using FitnessFn = std::function<double(std::span<const float>)>;

// One full iteration: perturb/evaluate/undo per member (private copies when
// workers > 1), normalize rewards, aggregate, update in place. Results are
// bit-identical for any worker count.
StepResult es_step(std::span<float> flat, const EsConfig& config, const GroupScales& scales,
                   uint64_t master_seed, uint64_t iteration, const FitnessFn& fitness);

}  // namespace eslm

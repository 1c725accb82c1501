#include "eslm/es.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <thread>

#include "eslm/error.hpp"
#include "eslm/rng.hpp"

namespace eslm {

namespace {

// Walks the ranges overlapping [begin, begin+length), yielding
// (flat offset, span length, range) pieces in order.
template <typename Fn>
void for_ranges(const GroupScales& scales, size_t begin, size_t length, Fn&& fn) {
    const size_t end = begin + length;
    for (const auto& range : scales.ranges) {
        const size_t r_end = range.offset + range.length;
        if (r_end <= begin || range.offset >= end) {
            continue;
        }
        const size_t lo = std::max(begin, range.offset);
        const size_t hi = std::min(end, r_end);
        fn(lo, hi - lo, range);
    }
}

#ifndef NDEBUG
uint64_t bits_checksum(std::span<const float> flat) {
    uint64_t h = 0x9E3779B97F4A7C15ull;
    for (const float v : flat) {
        uint32_t b;
        std::memcpy(&b, &v, sizeof(b));
        h = splitmix64(h ^ b);
    }
    return h;
}
#endif

}  // namespace

Normalization normalization_from_string(std::string_view name) {
    if (name == "zscore") return Normalization::kZScore;
    if (name == "rank") return Normalization::kRank;
    throw ConfigError("normalization: unknown kind '" + std::string(name) +
                      "' (expected zscore or rank)");
}

std::string_view normalization_to_string(Normalization n) {
    return n == Normalization::kZScore ? "zscore" : "rank";
}

void EsConfig::validate() const {
    if (population < 2) throw ConfigError("es: population must be >= 2");
    if (!(sigma > 0.0)) throw ConfigError("es: sigma must be positive");
    if (!(alpha > 0.0)) throw ConfigError("es: alpha must be positive");
    if (antithetic && population % 2 != 0) {
        throw ConfigError("es: antithetic sampling requires an even population");
    }
    if (!(gamma_alpha > 0.0 && gamma_alpha <= 1.0)) {
        throw ConfigError("es: gamma_alpha must be in (0, 1]");
    }
    if (!(gamma_sigma > 0.0 && gamma_sigma <= 1.0)) {
        throw ConfigError("es: gamma_sigma must be in (0, 1]");
    }
    if (step_alpha < 0 || step_sigma < 0) {
        throw ConfigError("es: scheduler steps must be >= 0");
    }
    for (const auto& g : group_multipliers) {
        if (!(g.alpha > 0.0) || !(g.sigma > 0.0)) {
            throw ConfigError("es: group multipliers must be positive");
        }
    }
    if (noise_chunk < 1) throw ConfigError("es: noise_chunk must be >= 1");
    if (workers < 1) throw ConfigError("es: workers must be >= 1");
}

bool pattern_match(std::string_view pattern, std::string_view name) {
    // Iterative glob: '*' matches any (possibly empty) substring.
    size_t p = 0, n = 0;
    size_t star = std::string_view::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') {
        ++p;
    }
    return p == pattern.size();
}

size_t GroupScales::total() const {
    size_t t = 0;
    for (const auto& r : ranges) {
        t += r.length;
    }
    return t;
}

GroupScales GroupScales::uniform(size_t total_floats) {
    GroupScales scales;
    if (total_floats > 0) {
        scales.ranges.push_back({0, total_floats, 1.0, 1.0});
    }
    return scales;
}

GroupScales GroupScales::resolve(const Layout& layout,
                                 const std::vector<GroupMultiplier>& multipliers) {
    GroupScales scales;
    for (const TensorInfo& t : layout.tensors) {
        double alpha = 1.0, sigma = 1.0;
        for (const auto& g : multipliers) {
            if (pattern_match(g.pattern, t.name)) {
                alpha = g.alpha;
                sigma = g.sigma;
                break;
            }
        }
        // Coalesce with the previous range when the factors agree.
        if (!scales.ranges.empty() && scales.ranges.back().alpha_mult == alpha &&
            scales.ranges.back().sigma_mult == sigma) {
            scales.ranges.back().length += t.size();
        } else {
            scales.ranges.push_back({t.offset, t.size(), alpha, sigma});
        }
    }
    return scales;
}

std::vector<Ticket> make_tickets(uint64_t master_seed, uint64_t iteration,
                                 const EsConfig& config) {
    config.validate();
    const uint64_t base = derive_seed(master_seed, StreamTag::kNoise, iteration);
    std::vector<Ticket> tickets;
    tickets.reserve(static_cast<size_t>(config.population));
    if (config.antithetic) {
        for (int p = 0; p < config.population / 2; ++p) {
            // splitmix64 is a bijection, so pair seeds are distinct.
            const uint64_t seed = splitmix64(base + static_cast<uint64_t>(p));
            tickets.push_back({seed, +1});
            tickets.push_back({seed, -1});
        }
    } else {
        for (int j = 0; j < config.population; ++j) {
            tickets.push_back({splitmix64(base + static_cast<uint64_t>(j)), +1});
        }
    }
    return tickets;
}

void perturb_in_place(std::span<float> flat, const Ticket& ticket, double sigma_t,
                      const GroupScales& scales, size_t noise_chunk, PerturbUndo* undo) {
    if (scales.total() != flat.size()) {
        throw ConfigError("perturb: group scales do not cover the parameter vector");
    }
    const GaussianStream stream(ticket.seed);
    std::vector<float> noise(std::min(noise_chunk, flat.size()));
    for (size_t begin = 0; begin < flat.size(); begin += noise.size()) {
        const size_t len = std::min(noise.size(), flat.size() - begin);
        stream.fill(begin, std::span<float>(noise.data(), len));
        for_ranges(scales, begin, len, [&](size_t lo, size_t span_len, const auto& range) {
            const double coeff = static_cast<double>(ticket.sign) * sigma_t * range.sigma_mult;
            for (size_t i = lo; i < lo + span_len; ++i) {
                const double d = coeff * static_cast<double>(noise[i - begin]);
                if (d == 0.0) {
                    continue;  // preserve bits (including negative zero)
                }
                const float x = flat[i];
                const float y = static_cast<float>(static_cast<double>(x) + d);
                if (undo != nullptr) {
                    // Record entries the float subtraction cannot restore.
                    const float back = static_cast<float>(static_cast<double>(y) - d);
                    uint32_t xb, bb;
                    std::memcpy(&xb, &x, sizeof(xb));
                    std::memcpy(&bb, &back, sizeof(bb));
                    if (xb != bb) {
                        undo->lossy.emplace_back(i, x);
                    }
                }
                flat[i] = y;
            }
        });
    }
}

void unperturb_in_place(std::span<float> flat, const Ticket& ticket, double sigma_t,
                        const GroupScales& scales, size_t noise_chunk,
                        const PerturbUndo& undo) {
    if (scales.total() != flat.size()) {
        throw ConfigError("unperturb: group scales do not cover the parameter vector");
    }
    const GaussianStream stream(ticket.seed);
    std::vector<float> noise(std::min(noise_chunk, flat.size()));
    for (size_t begin = 0; begin < flat.size(); begin += noise.size()) {
        const size_t len = std::min(noise.size(), flat.size() - begin);
        stream.fill(begin, std::span<float>(noise.data(), len));
        for_ranges(scales, begin, len, [&](size_t lo, size_t span_len, const auto& range) {
            const double coeff = static_cast<double>(ticket.sign) * sigma_t * range.sigma_mult;
            for (size_t i = lo; i < lo + span_len; ++i) {
                const double d = coeff * static_cast<double>(noise[i - begin]);
                if (d == 0.0) {
                    continue;
                }
                flat[i] = static_cast<float>(static_cast<double>(flat[i]) - d);
            }
        });
    }
    for (const auto& [index, value] : undo.lossy) {
        flat[index] = value;
    }
}

std::vector<double> zscore_weights(const RewardVector& rewards) {
    const size_t n = rewards.rewards.size();
    if (n < 2) {
        throw ConfigError("zscore_weights: need at least 2 rewards");
    }
    double mean = 0.0;
    for (const double r : rewards.rewards) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double r : rewards.rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);  // population variance
    const double denom = std::sqrt(var) + 1e-8;
    std::vector<double> weights(n);
    for (size_t j = 0; j < n; ++j) {
        weights[j] = (rewards.rewards[j] - mean) / denom;
    }
    return weights;
}

std::vector<double> rank_weights(const RewardVector& rewards) {
    const size_t n = rewards.rewards.size();
    if (n < 2) {
        throw ConfigError("rank_weights: need at least 2 rewards");
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    // Stable: tied rewards keep original index order, lower index first.
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return rewards.rewards[a] < rewards.rewards[b];
    });
    std::vector<double> weights(n);
    for (size_t rank = 0; rank < n; ++rank) {
        weights[order[rank]] =
            2.0 * static_cast<double>(rank) / static_cast<double>(n - 1) - 1.0;
    }
    return weights;
}

double scheduled(double base, uint64_t iteration, double gamma, int step) {
    if (step <= 0) {
        return base;
    }
    const uint64_t decays = iteration / static_cast<uint64_t>(step);
    return base * std::pow(gamma, static_cast<double>(decays));
}

UpdateStats aggregate_update(std::span<float> flat, const std::vector<Ticket>& tickets,
                             std::span<const double> weights, const EsConfig& config,
                             const GroupScales& scales, double sigma_t, double alpha_t) {
    if (tickets.size() != weights.size()) {
        throw ConfigError("aggregate_update: tickets and weights must align");
    }
    if (scales.total() != flat.size()) {
        throw ConfigError("aggregate_update: group scales do not cover the parameter vector");
    }
    const double n = static_cast<double>(tickets.size());
    const double scale_base = config.nes_scaling ? alpha_t / sigma_t : alpha_t;
    if (!std::isfinite(scale_base)) {
        throw NumericalError("aggregate_update: non-finite step scale");
    }
    for (const double w : weights) {
        if (!std::isfinite(w)) {
            throw NumericalError("aggregate_update: non-finite weight");
        }
    }

    const size_t chunk = std::min(config.noise_chunk, flat.size());
    std::vector<float> acc(chunk);
    std::vector<float> noise(chunk);
    UpdateStats stats;

    // Pass 1 validates every delta without touching theta, so a non-finite
    // update can be discarded with theta untouched. Pass 2 recomputes the
    // identical values and applies them.
    for (int pass = 0; pass < 2; ++pass) {
        const bool apply = pass == 1;
        for (size_t begin = 0; begin < flat.size(); begin += chunk) {
            const size_t len = std::min(chunk, flat.size() - begin);
            std::fill_n(acc.begin(), len, 0.0f);
            for (size_t j = 0; j < tickets.size(); ++j) {
                if (weights[j] == 0.0) {
                    continue;
                }
                const float coeff =
                    static_cast<float>(static_cast<double>(tickets[j].sign) * weights[j] / n);
                const GaussianStream stream(tickets[j].seed);
                stream.fill(begin, std::span<float>(noise.data(), len));
                for (size_t i = 0; i < len; ++i) {
                    acc[i] += coeff * noise[i];
                }
            }
            for_ranges(scales, begin, len, [&](size_t lo, size_t span_len, const auto& range) {
                const double scale = scale_base * range.alpha_mult;
                for (size_t i = lo; i < lo + span_len; ++i) {
                    const double delta = scale * static_cast<double>(acc[i - begin]);
                    if (apply) {
                        if (delta != 0.0) {
                            flat[i] = static_cast<float>(static_cast<double>(flat[i]) + delta);
                        }
                        stats.l2 += delta * delta;
                        stats.max_abs = std::max(stats.max_abs, std::fabs(delta));
                    } else if (!std::isfinite(delta) ||
                               !std::isfinite(static_cast<double>(flat[i]) + delta)) {
                        throw NumericalError(
                            "aggregate_update: non-finite update; parameters unchanged");
                    }
                }
            });
        }
    }
    stats.l2 = std::sqrt(stats.l2);
    return stats;
}

StepResult es_step(std::span<float> flat, const EsConfig& config, const GroupScales& scales,
                   uint64_t master_seed, uint64_t iteration, const FitnessFn& fitness) {
    config.validate();
    StepResult result;
    result.sigma_t = scheduled(config.sigma, iteration, config.gamma_sigma, config.step_sigma);
    result.alpha_t = scheduled(config.alpha, iteration, config.gamma_alpha, config.step_alpha);
    result.population.tickets = make_tickets(master_seed, iteration, config);
    const auto& tickets = result.population.tickets;
    const size_t n = tickets.size();
    result.population.rewards.assign(n, 0.0);

    if (config.workers <= 1) {
        PerturbUndo undo;
        for (size_t j = 0; j < n; ++j) {
#ifndef NDEBUG
            const uint64_t before = bits_checksum(flat);
#endif
            undo.lossy.clear();
            perturb_in_place(flat, tickets[j], result.sigma_t, scales, config.noise_chunk,
                             &undo);
            try {
                result.population.rewards[j] = fitness(flat);
            } catch (...) {
                unperturb_in_place(flat, tickets[j], result.sigma_t, scales,
                                   config.noise_chunk, undo);
                throw;
            }
            unperturb_in_place(flat, tickets[j], result.sigma_t, scales, config.noise_chunk,
                               undo);
#ifndef NDEBUG
            if (bits_checksum(flat) != before) {
                throw NumericalError("es_step: perturb/unperturb round trip lost bits");
            }
#endif
        }
    } else {
        // Each worker evaluates on a private copy, so the canonical vector is
        // never touched and results match the sequential path bit for bit.
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        const int workers = std::min<int>(config.workers, static_cast<int>(n));
        std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    std::vector<float> copy(flat.size());
                    for (size_t j = next.fetch_add(1); j < n; j = next.fetch_add(1)) {
                        std::memcpy(copy.data(), flat.data(), flat.size() * sizeof(float));
                        perturb_in_place(copy, tickets[j], result.sigma_t, scales,
                                         config.noise_chunk, nullptr);
                        result.population.rewards[j] = fitness(copy);
                    }
                } catch (...) {
                    errors[static_cast<size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    if (config.eval_center) {
        result.has_center = true;
        result.center_reward = fitness(flat);
    }

    // Non-finite member rewards are clamped to the population minimum so the
    // update stays defined and the member is maximally penalized.
    double min_finite = std::numeric_limits<double>::infinity();
    for (const double r : result.population.rewards) {
        if (std::isfinite(r)) {
            min_finite = std::min(min_finite, r);
        }
    }
    if (!std::isfinite(min_finite)) {
        throw NumericalError("es_step: every population member returned a non-finite reward");
    }
    for (double& r : result.population.rewards) {
        if (!std::isfinite(r)) {
            r = min_finite;
            ++result.clamped_members;
        }
    }
    if (result.clamped_members > 0) {
        std::fprintf(stderr, "warning: es_step: clamped %d non-finite member reward(s)\n",
                     result.clamped_members);
    }

    result.reward_mean = 0.0;
    result.reward_max = -std::numeric_limits<double>::infinity();
    result.reward_min = std::numeric_limits<double>::infinity();
    for (const double r : result.population.rewards) {
        result.reward_mean += r;
        result.reward_max = std::max(result.reward_max, r);
        result.reward_min = std::min(result.reward_min, r);
    }
    result.reward_mean /= static_cast<double>(n);

    const std::vector<double> weights = config.normalization == Normalization::kZScore
                                            ? zscore_weights(result.population)
                                            : rank_weights(result.population);
    result.update = aggregate_update(flat, tickets, weights, config, scales, result.sigma_t,
                                     result.alpha_t);
    return result;
}

}  // namespace eslm

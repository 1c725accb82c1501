#include "eslm/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "eslm/checkpoint.hpp"
#include "eslm/data.hpp"
#include "eslm/error.hpp"
#include "eslm/fitness.hpp"
#include "eslm/memory_report.hpp"
#include "eslm/metrics.hpp"

namespace eslm {

namespace fs = std::filesystem;

namespace {

std::string checkpoint_name(uint64_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06llu.ckpt",
                  static_cast<unsigned long long>(iteration));
    return buf;
}

// Newest checkpoint in the directory, numbered or final.
std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
    std::optional<fs::path> best;
    uint64_t best_iter = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (!name.starts_with("checkpoint_") || !name.ends_with(".ckpt")) {
            continue;
        }
        uint64_t iter = 0;
        try {
            iter = load_checkpoint(entry.path().string()).iteration;
        } catch (const std::exception&) {
            continue;  // unreadable or foreign file; ignore
        }
        if (!best || iter > best_iter) {
            best = entry.path();
            best_iter = iter;
        }
    }
    return best;
}

}  // namespace

std::string resolve_output_dir(const RunConfig& config) {
    if (const char* env = std::getenv("ESLM_OUTPUT_DIR"); env != nullptr && env[0] != '\0') {
        return env;
    }
    return config.run.output_dir;
}

int run(const RunConfig& config, std::ostream& log) {
    config.validate();
    const fs::path out_dir = resolve_output_dir(config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw ConfigError("run: cannot create output dir " + out_dir.string() + ": " +
                          ec.message());
    }

    // Snapshot the fully resolved config before doing anything else, so every
    // run directory is self-describing.
    {
        RunConfig resolved = config;
        resolved.run.output_dir = out_dir.string();
        std::ofstream snap(out_dir / "resolved_config.json", std::ios::trunc);
        if (!snap) {
            throw ConfigError("run: output dir not writable: " + out_dir.string());
        }
        snap << dump_run_config(resolved);
    }

    const Corpus corpus =
        ingest_file(config.data.corpus_path, config.data.tokenizer, config.data.line_cap);
    if (config.run.eval_samples > corpus.size()) {
        throw ConfigError("run: eval_samples exceeds corpus size " +
                          std::to_string(corpus.size()));
    }

    // Fresh init, or resume after the newest checkpoint in the directory.
    ModelParams params;
    uint64_t start_iteration = 1;
    const std::string metrics_path = (out_dir / "metrics.csv").string();
    if (const auto resume_from = latest_checkpoint(out_dir)) {
        Checkpoint ckpt = load_checkpoint(resume_from->string());
        if (ckpt.params.layout.total_floats != param_count(config.model)) {
            throw ConfigError("run: checkpoint in output dir does not match model config");
        }
        params = std::move(ckpt.params);
        start_iteration = ckpt.iteration + 1;
        // Drop metrics rows past the checkpoint so the continuation appends
        // exactly where the restored parameters left off.
        if (fs::exists(metrics_path)) {
            truncate_metrics(metrics_path, ckpt.iteration);
        }
        log << "resuming after iteration " << ckpt.iteration << " from "
            << resume_from->filename().string() << "\n";
    } else {
        params = init_params(config.model, config.run.master_seed);
    }

    MetricsWriter metrics(metrics_path, /*truncate=*/start_iteration == 1);
    const GroupScales scales =
        GroupScales::resolve(params.layout, config.es.group_multipliers);
    const MemoryReport accounting =
        memory_report(config.model, config.es, config.run.micro_batch, config.data.max_seq_len);

    const auto total = static_cast<uint64_t>(config.run.iterations);
    for (uint64_t t = start_iteration; t <= total; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        const SubsetPlan plan =
            sample_subset(config.run.master_seed, t, corpus.size(), config.run.eval_samples);
        const TokenBatch batch = pack_batch(corpus, plan.indices, config.data.max_seq_len);
        const FitnessFn fitness = [&](std::span<const float> flat) -> double {
            thread_local ForwardWorkspace ws;
            const ParamsView view{flat, &params.layout};
            return batch_fitness(view, config.model, batch, config.run.micro_batch, &ws).value;
        };

        StepResult step;
        try {
            step = es_step(params.flat, config.es, scales, config.run.master_seed, t, fitness);
        } catch (const NumericalError& e) {
            log << "numerical error at iteration " << t << ": " << e.what() << "\n";
            save_checkpoint((out_dir / "checkpoint_final.ckpt").string(), config.model, t - 1,
                            params);
            return 1;
        }

        RunMetricsRow row;
        row.iteration = t;
        row.loss = step.has_center ? -step.center_reward : -step.reward_mean;
        row.reward_mean = step.reward_mean;
        row.reward_max = step.reward_max;
        row.reward_min = step.reward_min;
        row.sigma = step.sigma_t;
        row.alpha = step.alpha_t;
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        row.es_state_floats = accounting.es_state_floats;
        row.grad_state_floats = accounting.grad_state_floats;
        metrics.append(row);

        log << "iter " << t << "/" << total << "  loss " << row.loss << "  reward ["
            << row.reward_min << ", " << row.reward_max << "]  |update| " << step.update.l2
            << "\n";

        if (config.run.checkpoint_every > 0 &&
            t % static_cast<uint64_t>(config.run.checkpoint_every) == 0) {
            save_checkpoint((out_dir / checkpoint_name(t)).string(), config.model, t, params);
        }
    }

    save_checkpoint((out_dir / "checkpoint_final.ckpt").string(), config.model, total, params);
    return 0;
}

}  // namespace eslm

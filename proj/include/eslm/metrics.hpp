#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eslm {

// One row per iteration; loss is -(mean population reward) in nats/token
// unless the center evaluation is enabled, in which case it is -(center
// reward).
struct RunMetricsRow {
    uint64_t iteration = 0;
    double loss = 0.0;
    double reward_mean = 0.0;
    double reward_max = 0.0;
    double reward_min = 0.0;
    double sigma = 0.0;
    double alpha = 0.0;
    double wall_ms = 0.0;
    uint64_t es_state_floats = 0;
    uint64_t grad_state_floats = 0;
};

extern const char kMetricsHeader[];

// Append-only CSV writer; every row is flushed so a killed run keeps all
// completed iterations.
class MetricsWriter {
  public:
    MetricsWriter(const std::string& path, bool truncate);
    ~MetricsWriter();
    MetricsWriter(const MetricsWriter&) = delete;
    MetricsWriter& operator=(const MetricsWriter&) = delete;

    void append(const RunMetricsRow& row);

  private:
    std::FILE* file_ = nullptr;
};

// Throws ParseError naming the 1-based line on malformed input.
std::vector<RunMetricsRow> read_metrics(const std::string& path);

// Rewrites the file keeping only rows with iteration <= max_iteration.
void truncate_metrics(const std::string& path, uint64_t max_iteration);

// Writes (iteration, loss, smoothed) columns; smoothing is a trailing mean
// over `window` rows (fewer at the start of the series).
void export_loss_curve(const std::string& metrics_path, const std::string& out_path,
                       int window = 20);

// Trailing-mean smoothing of a series, same rule as export_loss_curve.
std::vector<double> trailing_mean(const std::vector<double>& series, int window);

}  // namespace eslm

#include "eslm/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eslm/error.hpp"

namespace eslm {

const char kMetricsHeader[] =
    "iteration,loss,reward_mean,reward_max,reward_min,sigma,alpha,wall_ms,"
    "es_state_floats,grad_state_floats";

MetricsWriter::MetricsWriter(const std::string& path, bool truncate) {
    const bool fresh = truncate || !std::ifstream(path).good();
    file_ = std::fopen(path.c_str(), truncate ? "w" : "a");
    if (file_ == nullptr) {
        throw ConfigError("metrics: cannot open for writing: " + path);
    }
    if (fresh) {
        std::fprintf(file_, "%s\n", kMetricsHeader);
        std::fflush(file_);
    }
}

MetricsWriter::~MetricsWriter() {
    if (file_ != nullptr) {
        std::fclose(file_);
    }
}

void MetricsWriter::append(const RunMetricsRow& row) {
    // %.17g round-trips doubles exactly, keeping reruns byte-comparable.
    std::fprintf(file_,
                 "%" PRIu64 ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f,%" PRIu64 ",%" PRIu64
                 "\n",
                 row.iteration, row.loss, row.reward_mean, row.reward_max, row.reward_min,
                 row.sigma, row.alpha, row.wall_ms, row.es_state_floats,
                 row.grad_state_floats);
    std::fflush(file_);
}

std::vector<RunMetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("metrics: cannot open: " + path);
    }
    std::string line;
    size_t line_no = 0;
    std::vector<RunMetricsRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != kMetricsHeader) {
                throw ParseError("metrics: unexpected header at line 1");
            }
            continue;
        }
        RunMetricsRow row;
        const int got = std::sscanf(line.c_str(),
                                    "%" SCNu64 ",%lg,%lg,%lg,%lg,%lg,%lg,%lg,%" SCNu64
                                    ",%" SCNu64,
                                    &row.iteration, &row.loss, &row.reward_mean,
                                    &row.reward_max, &row.reward_min, &row.sigma, &row.alpha,
                                    &row.wall_ms, &row.es_state_floats,
                                    &row.grad_state_floats);
        if (got != 10) {
            throw ParseError("metrics: malformed row at line " + std::to_string(line_no));
        }
        rows.push_back(row);
    }
    return rows;
}

void truncate_metrics(const std::string& path, uint64_t max_iteration) {
    const std::vector<RunMetricsRow> rows = read_metrics(path);
    MetricsWriter writer(path, /*truncate=*/true);
    for (const auto& row : rows) {
        if (row.iteration <= max_iteration) {
            writer.append(row);
        }
    }
}

std::vector<double> trailing_mean(const std::vector<double>& series, int window) {
    std::vector<double> out(series.size());
    double sum = 0.0;
    for (size_t i = 0; i < series.size(); ++i) {
        sum += series[i];
        if (i >= static_cast<size_t>(window)) {
            sum -= series[i - window];
        }
        const size_t count = std::min(i + 1, static_cast<size_t>(window));
        out[i] = sum / static_cast<double>(count);
    }
    return out;
}

void export_loss_curve(const std::string& metrics_path, const std::string& out_path,
                       int window) {
    if (window < 1) {
        throw ConfigError("export_loss_curve: window must be >= 1");
    }
    const std::vector<RunMetricsRow> rows = read_metrics(metrics_path);
    std::vector<double> losses;
    losses.reserve(rows.size());
    for (const auto& row : rows) {
        losses.push_back(row.loss);
    }
    const std::vector<double> smoothed = trailing_mean(losses, window);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
        throw ConfigError("export_loss_curve: cannot open for writing: " + out_path);
    }
    out << "iteration,loss,smoothed\n";
    char buf[128];
    for (size_t i = 0; i < rows.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%.17g,%.17g\n", rows[i].iteration,
                      losses[i], smoothed[i]);
        out << buf;
    }
}

}  // namespace eslm

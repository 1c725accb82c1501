#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "eslm/config.hpp"
#include "eslm/error.hpp"
#include "eslm/memory_report.hpp"
#include "eslm/metrics.hpp"
#include "eslm/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"eslm: forward-only evolution-strategies pretraining for small causal LMs"};
    app.require_subcommand(1);

    std::string config_path;
    std::string override_output;
    CLI::App* cmd_run = app.add_subcommand("run", "Train from a JSON config file");
    cmd_run->add_option("config", config_path, "Path to run config (JSON)")->required();
    cmd_run->add_option("--output-dir", override_output,
                        "Override run.output_dir (ESLM_OUTPUT_DIR also works)");

    std::string report_config_path;
    CLI::App* cmd_report =
        app.add_subcommand("report-memory", "Print the analytic memory accounting");
    cmd_report->add_option("config", report_config_path, "Path to run config (JSON)")
        ->required();

    std::string metrics_path;
    std::string curve_out = "curve.csv";
    int window = 20;
    CLI::App* cmd_curve =
        app.add_subcommand("export-curve", "Export (iteration, loss, smoothed) columns");
    cmd_curve->add_option("metrics", metrics_path, "Path to metrics.csv")->required();
    cmd_curve->add_option("-o,--output", curve_out, "Output CSV path");
    cmd_curve->add_option("-w,--window", window, "Trailing-mean window");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            eslm::RunConfig config = eslm::load_run_config(config_path);
            if (!override_output.empty()) {
                config.run.output_dir = override_output;
            }
            return eslm::run(config, std::cout);
        }
        if (cmd_report->parsed()) {
            const eslm::RunConfig config = eslm::load_run_config(report_config_path);
            const eslm::MemoryReport report = eslm::memory_report(
                config.model, config.es, config.run.micro_batch, config.data.max_seq_len);
            eslm::print_memory_report(report, std::cout);
            return 0;
        }
        if (cmd_curve->parsed()) {
            eslm::export_loss_curve(metrics_path, curve_out, window);
            std::cout << "wrote " << curve_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gsi/commands.hpp"
#include "gsi/error.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    long workers = 0;
    long k = 0;
    double eta = 0.0;
    bool cascade = false;
    CLI::Option* cascade_opt = nullptr;  // presence decides whether to override
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "experiment config JSON")->required();
    cmd->add_option("--output-dir", f.output_dir, "override output directory");
    cmd->add_option("--workers", f.workers, "override worker count");
    cmd->add_option("--k", f.k, "override basis rank");
    cmd->add_option("--eta", f.eta, "override streamed-insertion threshold");
    f.cascade_opt = cmd->add_flag("--cascade,!--no-cascade", f.cascade, "override basis inheritance");
}

gsi::ExperimentConfig load(const CommonFlags& f) {
    gsi::ExperimentConfig cfg = gsi::load_config(f.config_path);
    if (!f.output_dir.empty()) cfg.output_dir = f.output_dir;
    if (f.workers > 0) cfg.workers = static_cast<std::size_t>(f.workers);
    if (f.k > 0) cfg.basis.k = static_cast<std::size_t>(f.k);
    if (f.eta > 0.0) cfg.basis.eta = f.eta;
    if (f.cascade_opt != nullptr && f.cascade_opt->count() > 0) cfg.basis.cascade = f.cascade;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gated-subspace inference workbench"};
    app.require_subcommand(1);

    CommonFlags calibrate_f, sweep_f, coherence_f, costmodel_f;
    CLI::App* calibrate_cmd =
        app.add_subcommand("calibrate", "build per-layer bases and cached weight images");
    add_common(calibrate_cmd, calibrate_f);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "evaluate the k/threshold/mode grid");
    add_common(sweep_cmd, sweep_f);
    CLI::App* coherence_cmd =
        app.add_subcommand("coherence", "measure inter-layer basis alignment");
    add_common(coherence_cmd, coherence_f);
    CLI::App* costmodel_cmd =
        app.add_subcommand("costmodel", "analytical decode-step cost tables");
    add_common(costmodel_cmd, costmodel_f);

    std::string report_input;
    std::string report_output = "out";
    CLI::App* report_cmd = app.add_subcommand("report", "render a result sidecar as a table");
    report_cmd->add_option("--input", report_input, "sidecar JSON produced by another subcommand")
        ->required();
    report_cmd->add_option("--output-dir", report_output, "where report.txt goes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (calibrate_cmd->parsed()) return gsi::cmd_calibrate(load(calibrate_f));
        if (sweep_cmd->parsed()) return gsi::cmd_sweep(load(sweep_f));
        if (coherence_cmd->parsed()) return gsi::cmd_coherence(load(coherence_f));
        if (costmodel_cmd->parsed()) return gsi::cmd_costmodel(load(costmodel_f));
        if (report_cmd->parsed()) {
            if (const char* env = std::getenv("GSI_OUTPUT_DIR"); env && *env) report_output = env;
            return gsi::cmd_report(report_input, report_output);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gsi::exit_code(e);
    }
    return 0;
}

#pragma once

#include <string>

#include "gsi/config.hpp"

namespace gsi {

// Subcommand bodies. Each writes its artifacts under cfg.output_dir and
// prints a short summary; all return 0 (failures surface as exceptions and
// become exit codes in the CLI driver).
int cmd_calibrate(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);
int cmd_coherence(const ExperimentConfig& cfg);
int cmd_costmodel(const ExperimentConfig& cfg);
int cmd_report(const std::string& sidecar_path, const std::string& output_dir);

}  // namespace gsi

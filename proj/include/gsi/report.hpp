#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsi/cascade.hpp"
#include "gsi/cost_model.hpp"
#include "gsi/eval.hpp"

namespace gsi {

// One sweep grid point. Baseline and static rows do not depend on the gate
// threshold and carry epsilon = 0.
struct SweepRow {
    std::size_t k = 0;
    double epsilon = 0.0;
    std::string mode;
    EvalReport report;
};

// Rows are emitted sorted by (k, epsilon, mode). The TSV is rounded for
// reading; the JSON sidecar keeps full precision and the per-layer detail.
std::string sweep_tsv(std::span<const SweepRow> rows);
nlohmann::ordered_json sweep_json(std::span<const SweepRow> rows);

std::string coherence_tsv(const CoherenceProfile& profile);
nlohmann::ordered_json coherence_json(const CoherenceProfile& profile,
                                      std::span<const double> effective_ranks,
                                      const CascadeTrace* trace);

std::string cost_tsv(const CostBreakdown& breakdown);
nlohmann::ordered_json cost_json(const CostBreakdown& breakdown, const HardwareProfile& hw);

// Render any sidecar produced above ("kind" field selects the layout) as a
// human-readable table.
std::string render_report(const nlohmann::ordered_json& sidecar);

void write_text_file(const std::string& path, const std::string& content);
nlohmann::ordered_json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::ordered_json& j);

}  // namespace gsi

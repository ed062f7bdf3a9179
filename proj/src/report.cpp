#include "gsi/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gsi/error.hpp"

namespace gsi {

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

nlohmann::ordered_json layer_stats_json(const EvalReport& r) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerEvalStats& l : r.layers) {
        layers.push_back({{"fast_fraction", l.fast_fraction},
                          {"mean_rho", l.mean_rho},
                          {"bytes_baseline", l.bytes_baseline},
                          {"bytes_actual", l.bytes_actual},
                          {"bytes_gate_overhead", l.bytes_gate_overhead}});
    }
    return layers;
}

}  // namespace

std::string sweep_tsv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "k\tepsilon\tmode\tppl_baseline\tppl\tppl_ratio\ttop1\tgen_agreement\t"
           "fast_fraction\ts_eff\tmean_rho\n";
    for (const SweepRow& r : rows) {
        out << r.k << '\t' << fmt("%.6g", r.epsilon) << '\t' << r.mode << '\t'
            << fmt("%.4f", r.report.ppl_baseline) << '\t' << fmt("%.4f", r.report.ppl_gsi) << '\t'
            << fmt("%.4f", r.report.ppl_ratio) << '\t' << fmt("%.4f", r.report.top1) << '\t'
            << fmt("%.4f", r.report.gen_agreement) << '\t' << fmt("%.4f", r.report.fast_fraction)
            << '\t' << fmt("%.4f", r.report.s_eff) << '\t' << fmt("%.6f", r.report.mean_rho) << '\n';
    }
    return out.str();
}

nlohmann::ordered_json sweep_json(std::span<const SweepRow> rows) {
    nlohmann::ordered_json j;
    j["kind"] = "gsi-sweep";
    j["rows"] = nlohmann::ordered_json::array();
    for (const SweepRow& r : rows) {
        nlohmann::ordered_json row;
        row["k"] = r.k;
        row["epsilon"] = r.epsilon;
        row["mode"] = r.mode;
        row["ppl_baseline"] = r.report.ppl_baseline;
        row["ppl"] = r.report.ppl_gsi;
        row["ppl_ratio"] = r.report.ppl_ratio;
        row["top1"] = r.report.top1;
        row["gen_agreement"] = r.report.gen_agreement;
        row["fast_fraction"] = r.report.fast_fraction;
        row["s_eff"] = r.report.s_eff;
        row["s_eff_all_linear"] = r.report.s_eff_all_linear;
        row["mean_rho"] = r.report.mean_rho;
        row["bytes_gate_overhead"] = r.report.bytes_gate_overhead;
        row["layers"] = layer_stats_json(r.report);
        j["rows"].push_back(std::move(row));
    }
    return j;
}

std::string coherence_tsv(const CoherenceProfile& profile) {
    std::ostringstream out;
    out << "layer_pair\tk\tmean_cosine\tmin_cosine\n";
    for (const CoherencePair& p : profile.pairs) {
        out << (p.layer - 1) << "-" << p.layer << '\t' << p.k << '\t'
            << fmt("%.4f", p.mean_cosine) << '\t' << fmt("%.4f", p.min_cosine) << '\n';
    }
    return out.str();
}

nlohmann::ordered_json coherence_json(const CoherenceProfile& profile,
                                      std::span<const double> effective_ranks,
                                      const CascadeTrace* trace) {
    nlohmann::ordered_json j;
    j["kind"] = "gsi-coherence";
    j["pairs"] = nlohmann::ordered_json::array();
    for (const CoherencePair& p : profile.pairs) {
        j["pairs"].push_back({{"layer", p.layer},
                              {"k", p.k},
                              {"mean_cosine", p.mean_cosine},
                              {"min_cosine", p.min_cosine}});
    }
    j["stream_effective_rank"] = std::vector<double>(effective_ranks.begin(), effective_ranks.end());
    if (trace) {
        j["cascade_trace"] = nlohmann::ordered_json::array();
        for (const CascadeEntry& e : trace->layers) {
            j["cascade_trace"].push_back({{"origin", to_string(e.origin)},
                                          {"acceptances", e.acceptances},
                                          {"final_rank", e.final_rank},
                                          {"exhausted", e.exhausted}});
        }
    }
    return j;
}

std::string cost_tsv(const CostBreakdown& b) {
    std::ostringstream out;
    out << "component\tbaseline_ms\taccelerated_ms\tspeedup\n";
    for (const CostComponent& c : b.components) {
        out << c.name << '\t' << fmt("%.4f", c.baseline_seconds * 1e3) << '\t'
            << fmt("%.4f", c.accelerated_seconds * 1e3) << '\t' << fmt("%.2f", c.speedup) << '\n';
    }
    out << "total\t" << fmt("%.4f", b.total_baseline_seconds * 1e3) << '\t'
        << fmt("%.4f", b.total_accelerated_seconds * 1e3) << '\t' << fmt("%.2f", b.total_speedup)
        << '\n';
    return out.str();
}

nlohmann::ordered_json cost_json(const CostBreakdown& b, const HardwareProfile& hw) {
    nlohmann::ordered_json j;
    j["kind"] = "gsi-costmodel";
    j["hardware"] = {{"name", hw.name},
                     {"bandwidth_bytes_per_s", hw.bandwidth_bytes_per_s},
                     {"compute_flops_per_s", hw.compute_flops_per_s},
                     {"element_bytes", hw.element_bytes},
                     {"crossover_intensity", hw.crossover_intensity()}};
    j["components"] = nlohmann::ordered_json::array();
    for (const CostComponent& c : b.components) {
        j["components"].push_back({{"name", c.name},
                                   {"baseline_seconds", c.baseline_seconds},
                                   {"accelerated_seconds", c.accelerated_seconds},
                                   {"speedup", c.speedup}});
    }
    j["total_baseline_seconds"] = b.total_baseline_seconds;
    j["total_accelerated_seconds"] = b.total_accelerated_seconds;
    j["total_speedup"] = b.total_speedup;
    j["footnotes"] = b.footnotes;
    return j;
}

std::string render_report(const nlohmann::ordered_json& sidecar) {
    const std::string kind = sidecar.value("kind", "");
    std::ostringstream out;
    if (kind == "gsi-sweep") {
        out << "gate sweep\n";
        out << "  k  epsilon   mode      ppl_ratio  top1    fast    s_eff\n";
        for (const auto& r : sidecar.at("rows")) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%3zu  %-8.4g  %-8s  %-9.4f  %-6.3f  %-6.3f  %.3f\n",
                          r.at("k").get<std::size_t>(), r.at("epsilon").get<double>(),
                          r.at("mode").get<std::string>().c_str(), r.at("ppl_ratio").get<double>(),
                          r.at("top1").get<double>(), r.at("fast_fraction").get<double>(),
                          r.at("s_eff").get<double>());
            out << buf;
        }
    } else if (kind == "gsi-coherence") {
        out << "inter-layer basis coherence\n";
        out << "  pair   k   mean_cos  min_cos\n";
        for (const auto& p : sidecar.at("pairs")) {
            char buf[120];
            const std::size_t layer = p.at("layer").get<std::size_t>();
            std::snprintf(buf, sizeof buf, "  %zu-%zu   %2zu  %-8.4f  %.4f\n", layer - 1, layer,
                          p.at("k").get<std::size_t>(), p.at("mean_cosine").get<double>(),
                          p.at("min_cosine").get<double>());
            out << buf;
        }
        if (sidecar.contains("stream_effective_rank")) {
            out << "  stream effective rank per layer:";
            for (const auto& v : sidecar.at("stream_effective_rank")) {
                out << ' ' << fmt("%.2f", v.get<double>());
            }
            out << '\n';
        }
    } else if (kind == "gsi-costmodel") {
        out << "decode-step cost estimate (" << sidecar.at("hardware").at("name").get<std::string>()
            << ")\n";
        out << "  component             baseline_ms  accelerated_ms  speedup\n";
        for (const auto& c : sidecar.at("components")) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "  %-20s  %-11.4f  %-14.4f  %.2fx\n",
                          c.at("name").get<std::string>().c_str(),
                          c.at("baseline_seconds").get<double>() * 1e3,
                          c.at("accelerated_seconds").get<double>() * 1e3,
                          c.at("speedup").get<double>());
            out << buf;
        }
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-20s  %-11.4f  %-14.4f  %.2fx\n", "total",
                      sidecar.at("total_baseline_seconds").get<double>() * 1e3,
                      sidecar.at("total_accelerated_seconds").get<double>() * 1e3,
                      sidecar.at("total_speedup").get<double>());
        out << buf;
    } else if (kind == "gsi-calibration") {
        out << "calibration summary\n";
        out << "  layer  origin     rank  acceptances  exhausted\n";
        std::size_t i = 0;
        for (const auto& e : sidecar.at("trace")) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "  %-5zu  %-9s  %-4zu  %-11zu  %s\n", i++,
                          e.at("origin").get<std::string>().c_str(),
                          e.at("final_rank").get<std::size_t>(),
                          e.at("acceptances").get<std::size_t>(),
                          e.at("exhausted").get<bool>() ? "yes" : "no");
            out << buf;
        }
    } else {
        throw ConfigError("render_report: unknown sidecar kind '" + kind + "'");
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << content;
    if (!f) throw IoError("failed writing " + path);
}

nlohmann::ordered_json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    try {
        return nlohmann::ordered_json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace gsi

#include "gsi/commands.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <thread>

#include "gsi/error.hpp"
#include "gsi/report.hpp"

namespace gsi {

namespace {

std::size_t resolve_k(const ExperimentConfig& cfg) {
    if (cfg.basis.k != 0) return cfg.basis.k;
    if (!cfg.sweep.k.empty()) return cfg.sweep.k.front();
    throw ConfigError("config: no basis rank given (set basis.k or sweep.k)");
}

CalibrationOptions calibration_options(const ExperimentConfig& cfg, std::size_t k) {
    CalibrationOptions opt;
    opt.k = k;
    opt.cascade = cfg.basis.cascade;
    opt.eta = cfg.basis.eta;
    opt.stream = cfg.basis.stream;
    opt.k_max = cfg.basis.k_max;
    return opt;
}

nlohmann::ordered_json trace_json(const CascadeTrace& trace) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const CascadeEntry& e : trace.layers) {
        out.push_back({{"origin", to_string(e.origin)},
                       {"acceptances", e.acceptances},
                       {"final_rank", e.final_rank},
                       {"exhausted", e.exhausted}});
    }
    return out;
}

nlohmann::ordered_json settings_json(const ExperimentConfig& cfg) {
    return {{"model_type", cfg.model.type},
            {"basis",
             {{"cascade", cfg.basis.cascade},
              {"eta", cfg.basis.eta},
              {"stream", to_string(cfg.basis.stream)},
              {"k_max", cfg.basis.k_max}}},
            {"sweep", {{"k", cfg.sweep.k}, {"epsilon", cfg.sweep.epsilon}, {"modes", cfg.sweep.modes}}},
            {"eval_options",
             {{"gen_prompt", cfg.eval_options.gen_prompt}, {"gen_tokens", cfg.eval_options.gen_tokens}}}};
}

}  // namespace

int cmd_calibrate(const ExperimentConfig& cfg) {
    const ModelWeights model = materialize_model(cfg.model);
    const std::vector<std::int32_t> tokens = materialize_tokens(cfg.calibration, model.config.vocab);
    const std::size_t k = resolve_k(cfg);

    GsiRuntime rt = calibrate(model, tokens, calibration_options(cfg, k));
    const std::vector<double> ranks = stream_effective_ranks(model, tokens, cfg.basis.stream);

    save_model(model, cfg.output_dir + "/model");
    save_runtime(rt, cfg.output_dir + "/runtime");

    nlohmann::ordered_json sidecar;
    sidecar["kind"] = "gsi-calibration";
    sidecar["settings"] = settings_json(cfg);
    sidecar["k"] = k;
    sidecar["calibration_tokens"] = tokens.size();
    sidecar["trace"] = trace_json(rt.trace);
    sidecar["stream_effective_rank"] = ranks;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerRuntime& lr : rt.layers) {
        layers.push_back({{"rank", lr.basis.rank()},
                          {"origin", to_string(lr.basis.origin())},
                          {"fingerprint", lr.basis.fingerprint()}});
    }
    sidecar["layers"] = std::move(layers);
    write_json_file(cfg.output_dir + "/calibration.json", sidecar);

    std::cout << render_report(sidecar);
    std::cout << "wrote " << cfg.output_dir << "/model.{json,bin}, runtime.{json,bin}, calibration.json\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.k.empty()) throw ConfigError("config: sweep.k must not be empty");
    if (cfg.sweep.modes.empty()) throw ConfigError("config: sweep.modes must not be empty");
    const bool wants_gated = std::find(cfg.sweep.modes.begin(), cfg.sweep.modes.end(), "gated") !=
                             cfg.sweep.modes.end();
    if (wants_gated && cfg.sweep.epsilon.empty()) {
        throw ConfigError("config: sweep.epsilon must not be empty when gated mode is swept");
    }

    const ModelWeights model = materialize_model(cfg.model);
    const std::vector<std::int32_t> calib = materialize_tokens(cfg.calibration, model.config.vocab);
    const std::vector<std::int32_t> eval_toks = materialize_tokens(cfg.eval, model.config.vocab);

    std::vector<std::size_t> ks = cfg.sweep.k;
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    std::vector<GsiRuntime> runtimes;
    runtimes.reserve(ks.size());
    for (std::size_t k : ks) runtimes.push_back(calibrate(model, calib, calibration_options(cfg, k)));

    struct Task {
        std::size_t k_index;
        double epsilon;
        std::string mode;
    };
    std::vector<Task> tasks;
    std::vector<double> eps_sorted = cfg.sweep.epsilon;
    std::sort(eps_sorted.begin(), eps_sorted.end());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        // Row order is part of the output contract: k, then threshold, then
        // mode name. Baseline and static rows carry threshold 0.
        std::vector<std::pair<double, std::string>> points;
        for (const std::string& m : cfg.sweep.modes) {
            if (m == "gated") {
                for (double e : eps_sorted) points.emplace_back(e, m);
            } else {
                points.emplace_back(0.0, m);
            }
        }
        std::sort(points.begin(), points.end());
        for (auto& [e, m] : points) tasks.push_back({i, e, m});
    }

    std::vector<SweepRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& t = tasks[i];
            GsiRuntime rt = runtimes[t.k_index];
            rt.mode = parse_mode(t.mode, t.epsilon);
            SweepRow row;
            row.k = ks[t.k_index];
            row.epsilon = t.epsilon;
            row.mode = t.mode;
            row.report = evaluate(model, rt, eval_toks, cfg.eval_options);
            rows[i] = std::move(row);
        }
    };
    const std::size_t n_workers = std::min(cfg.workers, tasks.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    const std::string tsv = sweep_tsv(rows);
    nlohmann::ordered_json sidecar = sweep_json(rows);
    sidecar["settings"] = settings_json(cfg);
    nlohmann::ordered_json traces = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ks.size(); ++i) {
        traces.push_back({{"k", ks[i]}, {"trace", trace_json(runtimes[i].trace)}});
    }
    sidecar["calibrations"] = std::move(traces);

    write_text_file(cfg.output_dir + "/sweep.tsv", tsv);
    write_json_file(cfg.output_dir + "/sweep.json", sidecar);
    std::cout << tsv;
    std::cout << "wrote " << cfg.output_dir << "/sweep.tsv, sweep.json\n";
    return 0;
}

int cmd_coherence(const ExperimentConfig& cfg) {
    const ModelWeights model = materialize_model(cfg.model);
    const std::vector<std::int32_t> tokens = materialize_tokens(cfg.calibration, model.config.vocab);
    const std::size_t k = resolve_k(cfg);
    if (model.config.n_layers < 2) {
        throw ConfigError("coherence: model needs at least two layers");
    }

    // The profile measures alignment between independently calibrated layer
    // bases; the cascade trace (when enabled) shows how well inheritance
    // exploits that alignment.
    CalibrationOptions independent = calibration_options(cfg, k);
    independent.cascade = false;
    GsiRuntime rt = calibrate(model, tokens, independent);
    std::vector<SubspaceBasis> bases;
    for (const LayerRuntime& lr : rt.layers) bases.push_back(lr.basis);
    const CoherenceProfile profile = coherence_profile(bases, k);
    const std::vector<double> ranks = stream_effective_ranks(model, tokens, cfg.basis.stream);

    const CascadeTrace* trace = nullptr;
    GsiRuntime cascaded;
    if (cfg.basis.cascade) {
        cascaded = calibrate(model, tokens, calibration_options(cfg, k));
        trace = &cascaded.trace;
    }

    const std::string tsv = coherence_tsv(profile);
    nlohmann::ordered_json sidecar = coherence_json(profile, ranks, trace);
    sidecar["settings"] = settings_json(cfg);
    write_text_file(cfg.output_dir + "/coherence.tsv", tsv);
    write_json_file(cfg.output_dir + "/coherence.json", sidecar);
    std::cout << tsv;
    std::cout << "wrote " << cfg.output_dir << "/coherence.tsv, coherence.json\n";
    return 0;
}

int cmd_costmodel(const ExperimentConfig& cfg) {
    if (!cfg.costmodel.present) {
        throw ConfigError("config: costmodel section is required for this command");
    }
    E2eInputs inputs;
    inputs.attention_seconds = cfg.costmodel.attention_seconds;
    inputs.vocab_seconds = cfg.costmodel.vocab_seconds;
    inputs.norm_seconds = cfg.costmodel.norm_seconds;
    inputs.attention_speedup = cfg.costmodel.attention_speedup;

    bool from_stats = false;
    if (!cfg.costmodel.weight_layers.empty()) {
        inputs.weight_layers = cfg.costmodel.weight_layers;
    } else if (!cfg.costmodel.stats_path.empty()) {
        // Pull per-layer fast fractions and volumes out of a sweep sidecar,
        // rescaling the simulator's 8-byte elements to the deployed width.
        from_stats = true;
        const nlohmann::ordered_json stats = read_json_file(cfg.costmodel.stats_path);
        if (stats.value("kind", "") != "gsi-sweep") {
            throw ConfigError("costmodel: stats file is not a sweep sidecar");
        }
        const nlohmann::ordered_json* picked = nullptr;
        for (const auto& row : stats.at("rows")) {
            if (row.at("mode").get<std::string>() != "gated") continue;
            if (cfg.costmodel.select_k != 0 && row.at("k").get<std::size_t>() != cfg.costmodel.select_k)
                continue;
            if (cfg.costmodel.select_epsilon != 0.0 &&
                row.at("epsilon").get<double>() != cfg.costmodel.select_epsilon)
                continue;
            picked = &row;
            break;
        }
        if (!picked) {
            throw ConfigError("costmodel: no gated sweep row matches select_k/select_epsilon");
        }
        const double k = static_cast<double>(picked->at("k").get<std::size_t>());
        // The sidecar stores no dims; every gated map's input is d_model wide,
        // so take d from the model section.
        const ModelWeights model = materialize_model(cfg.model);
        const double d = static_cast<double>(model.config.d_model);
        for (const auto& l : picked->at("layers")) {
            LayerLoad load;
            load.fast_fraction = l.at("fast_fraction").get<double>();
            load.volume_bytes = l.at("bytes_baseline").get<double>() / sizeof(double) *
                                cfg.hardware.element_bytes;
            load.k = k;
            load.d = d;
            inputs.weight_layers.push_back(load);
        }
    } else {
        throw ConfigError("costmodel: provide weight_layers or stats_path");
    }

    CostBreakdown breakdown = end_to_end_estimate(inputs, cfg.hardware);
    if (from_stats) {
        breakdown.footnotes.push_back(
            "weight volumes derived from simulator gate stats (8-byte elements rescaled to "
            "deployed width); always-dense mlp-down volume is not included");
    }

    const std::string tsv = cost_tsv(breakdown);
    const nlohmann::ordered_json sidecar = cost_json(breakdown, cfg.hardware);
    write_text_file(cfg.output_dir + "/costmodel.tsv", tsv);
    write_json_file(cfg.output_dir + "/costmodel.json", sidecar);
    std::cout << tsv;
    std::cout << "wrote " << cfg.output_dir << "/costmodel.tsv, costmodel.json\n";
    return 0;
}

int cmd_report(const std::string& sidecar_path, const std::string& output_dir) {
    const nlohmann::ordered_json sidecar = read_json_file(sidecar_path);
    const std::string text = render_report(sidecar);
    write_text_file(output_dir + "/report.txt", text);
    std::cout << text;
    std::cout << "wrote " << output_dir << "/report.txt\n";
    return 0;
}

}  // namespace gsi

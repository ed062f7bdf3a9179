#include "gsi/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "gsi/error.hpp"
#include "gsi/report.hpp"

namespace gsi {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& where, const std::string& why) {
    throw ConfigError("config: " + where + ": " + why);
}

template <typename T>
T get_field(const json& j, const std::string& where, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(where + "." + key, "wrong type");
    }
}

template <typename T>
T need_field(const json& j, const std::string& where, const std::string& key) {
    if (!j.contains(key)) bad(where, "missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(where + "." + key, "wrong type");
    }
}

TokensSpec parse_tokens(const json& j, const std::string& where) {
    TokensSpec t;
    t.type = need_field<std::string>(j, where, "type");
    if (t.type == "file") {
        t.path = need_field<std::string>(j, where, "path");
    } else if (t.type == "blocks" || t.type == "uniform") {
        t.length = need_field<std::size_t>(j, where, "length");
        t.seed = need_field<std::uint64_t>(j, where, "seed");
        t.vocab = get_field<std::size_t>(j, where, "vocab", 0);
        if (t.type == "blocks") t.run = need_field<std::size_t>(j, where, "run");
    } else {
        bad(where + ".type", "expected file|blocks|uniform, got '" + t.type + "'");
    }
    return t;
}

ModelSpec parse_model(const json& j, const std::string& where) {
    ModelSpec m;
    m.type = need_field<std::string>(j, where, "type");
    if (m.type == "random") {
        m.config.d_model = need_field<std::size_t>(j, where, "d_model");
        m.config.n_layers = need_field<std::size_t>(j, where, "n_layers");
        m.config.n_heads = need_field<std::size_t>(j, where, "n_heads");
        m.config.d_ff = need_field<std::size_t>(j, where, "d_ff");
        m.config.vocab = need_field<std::size_t>(j, where, "vocab");
        m.config.max_seq = need_field<std::size_t>(j, where, "max_seq");
        m.config.pos_embedding =
            parse_pos_embedding(get_field<std::string>(j, where, "pos_embedding", "learned"));
        m.seed = need_field<std::uint64_t>(j, where, "seed");
        m.config.validate();
    } else if (m.type == "planted") {
        m.planted.d_model = need_field<std::size_t>(j, where, "d_model");
        m.planted.planted_rank = need_field<std::size_t>(j, where, "planted_rank");
        m.planted.n_layers = need_field<std::size_t>(j, where, "n_layers");
        m.planted.d_ff = get_field<std::size_t>(j, where, "d_ff", m.planted.d_ff);
        m.planted.vocab = get_field<std::size_t>(j, where, "vocab", 0);
        m.planted.max_seq = get_field<std::size_t>(j, where, "max_seq", m.planted.max_seq);
        m.planted.seed = need_field<std::uint64_t>(j, where, "seed");
        m.planted.mix_scale = get_field<double>(j, where, "mix_scale", m.planted.mix_scale);
    } else if (m.type == "container") {
        m.path = need_field<std::string>(j, where, "path");
    } else {
        bad(where + ".type", "expected random|planted|container, got '" + m.type + "'");
    }
    return m;
}

// Relative file references inside a config resolve against the config's own
// directory, so a checked-in config can name sibling data without caring
// about the process working directory.
std::string resolve_against(const std::filesystem::path& base, const std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    const json j = read_json_file(path);
    ExperimentConfig c;

    if (!j.contains("model")) bad("model", "missing section");
    c.model = parse_model(j.at("model"), "model");

    if (j.contains("calibration")) c.calibration = parse_tokens(j.at("calibration"), "calibration");
    if (j.contains("eval")) c.eval = parse_tokens(j.at("eval"), "eval");

    if (j.contains("eval_options")) {
        const json& e = j.at("eval_options");
        c.eval_options.gen_prompt = get_field<std::size_t>(e, "eval_options", "gen_prompt", 8);
        c.eval_options.gen_tokens = get_field<std::size_t>(e, "eval_options", "gen_tokens", 32);
    }

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        c.sweep.k = get_field<std::vector<std::size_t>>(s, "sweep", "k", {});
        c.sweep.epsilon = get_field<std::vector<double>>(s, "sweep", "epsilon", {});
        c.sweep.modes = get_field<std::vector<std::string>>(s, "sweep", "modes",
                                                            {"baseline", "gated", "static"});
        for (const std::string& m : c.sweep.modes) {
            if (m != "baseline" && m != "gated" && m != "static") {
                bad("sweep.modes", "unknown mode '" + m + "'");
            }
        }
        for (double e : c.sweep.epsilon) {
            if (!(e > 0.0 && e < 1.0)) bad("sweep.epsilon", "thresholds must lie in (0, 1)");
        }
        for (std::size_t k : c.sweep.k) {
            if (k == 0) bad("sweep.k", "ranks must be positive");
        }
    }

    if (j.contains("basis")) {
        const json& b = j.at("basis");
        c.basis.k = get_field<std::size_t>(b, "basis", "k", 0);
        c.basis.cascade = get_field<bool>(b, "basis", "cascade", false);
        c.basis.eta = get_field<double>(b, "basis", "eta", 0.25);
        c.basis.stream = parse_basis_stream(get_field<std::string>(b, "basis", "stream", "stacked"));
        c.basis.k_max = get_field<std::size_t>(b, "basis", "k_max", 0);
        if (!(c.basis.eta > 0.0 && c.basis.eta < 1.0)) bad("basis.eta", "must lie in (0, 1)");
    }

    if (j.contains("hardware")) {
        const json& h = j.at("hardware");
        c.hardware.name = get_field<std::string>(h, "hardware", "name", c.hardware.name);
        c.hardware.bandwidth_bytes_per_s =
            get_field<double>(h, "hardware", "bandwidth_bytes_per_s", c.hardware.bandwidth_bytes_per_s);
        c.hardware.compute_flops_per_s =
            get_field<double>(h, "hardware", "compute_flops_per_s", c.hardware.compute_flops_per_s);
        c.hardware.element_bytes = get_field<double>(h, "hardware", "element_bytes", 2.0);
        if (!(c.hardware.bandwidth_bytes_per_s > 0.0) || !(c.hardware.compute_flops_per_s > 0.0) ||
            !(c.hardware.element_bytes > 0.0)) {
            bad("hardware", "rates and element size must be positive");
        }
    }

    if (j.contains("costmodel")) {
        const json& cm = j.at("costmodel");
        c.costmodel.present = true;
        if (cm.contains("weight_layers")) {
            for (const auto& wl : cm.at("weight_layers")) {
                LayerLoad l;
                l.fast_fraction = need_field<double>(wl, "costmodel.weight_layers", "fast_fraction");
                l.volume_bytes = need_field<double>(wl, "costmodel.weight_layers", "volume_bytes");
                l.d = need_field<double>(wl, "costmodel.weight_layers", "d");
                l.k = need_field<double>(wl, "costmodel.weight_layers", "k");
                c.costmodel.weight_layers.push_back(l);
            }
        }
        c.costmodel.attention_seconds = get_field<double>(cm, "costmodel", "attention_seconds", 0.0);
        c.costmodel.vocab_seconds = get_field<double>(cm, "costmodel", "vocab_seconds", 0.0);
        c.costmodel.norm_seconds = get_field<double>(cm, "costmodel", "norm_seconds", 0.0);
        c.costmodel.attention_speedup = get_field<double>(cm, "costmodel", "attention_speedup", 1.0);
        c.costmodel.stats_path = get_field<std::string>(cm, "costmodel", "stats_path", "");
        c.costmodel.select_k = get_field<std::size_t>(cm, "costmodel", "select_k", 0);
        c.costmodel.select_epsilon = get_field<double>(cm, "costmodel", "select_epsilon", 0.0);
    }

    c.output_dir = get_field<std::string>(j, "config", "output_dir", "out");
    c.workers = get_field<std::size_t>(j, "config", "workers", 1);
    if (c.workers == 0) bad("workers", "must be at least 1");

    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    c.model.path = resolve_against(base, c.model.path);
    c.calibration.path = resolve_against(base, c.calibration.path);
    c.eval.path = resolve_against(base, c.eval.path);
    c.costmodel.stats_path = resolve_against(base, c.costmodel.stats_path);

    if (const char* env = std::getenv("GSI_OUTPUT_DIR"); env && *env) c.output_dir = env;
    if (const char* env = std::getenv("GSI_WORKERS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) {
            throw ConfigError("GSI_WORKERS must be a positive integer, got '" + std::string(env) + "'");
        }
        c.workers = static_cast<std::size_t>(v);
    }
    return c;
}

std::vector<std::int32_t> materialize_tokens(const TokensSpec& spec, std::size_t model_vocab) {
    if (spec.type.empty()) throw ConfigError("config: token section missing");
    const std::size_t vocab = spec.vocab == 0 ? model_vocab : spec.vocab;
    if (spec.type == "blocks") return block_tokens(spec.length, spec.run, vocab, spec.seed);
    if (spec.type == "uniform") return uniform_tokens(spec.length, vocab, spec.seed);

    const nlohmann::ordered_json j = read_json_file(spec.path);
    const nlohmann::ordered_json* arr = &j;
    if (j.is_object()) {
        if (!j.contains("tokens")) throw IoError("token file " + spec.path + ": missing 'tokens'");
        arr = &j.at("tokens");
    }
    if (!arr->is_array()) throw IoError("token file " + spec.path + ": expected an array");
    std::vector<std::int32_t> out;
    out.reserve(arr->size());
    for (const auto& v : *arr) {
        if (!v.is_number_integer()) throw IoError("token file " + spec.path + ": non-integer entry");
        const auto id = v.get<std::int64_t>();
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw IoError("token file " + spec.path + ": token " + std::to_string(id) +
                          " outside vocab [0, " + std::to_string(vocab) + ")");
        }
        out.push_back(static_cast<std::int32_t>(id));
    }
    if (out.empty()) throw IoError("token file " + spec.path + ": empty token stream");
    return out;
}

ModelWeights materialize_model(const ModelSpec& spec) {
    if (spec.type == "random") return init_random(spec.config, spec.seed);
    if (spec.type == "planted") return make_planted_model(spec.planted).weights;
    if (spec.type == "container") return load_model(spec.path);
    throw ConfigError("config: unknown model type '" + spec.type + "'");
}

}  // namespace gsi

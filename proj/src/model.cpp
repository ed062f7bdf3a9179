#include "gsi/model.hpp"

#include <cmath>
#include <string>

#include "gsi/container.hpp"
#include "gsi/error.hpp"
#include "gsi/prng.hpp"

namespace gsi {

const char* to_string(PosEmbedding p) {
    return p == PosEmbedding::Learned ? "learned" : "none";
}

PosEmbedding parse_pos_embedding(const std::string& s) {
    if (s == "learned") return PosEmbedding::Learned;
    if (s == "none") return PosEmbedding::None;
    throw ConfigError("unknown positional embedding style '" + s + "' (expected learned|none)");
}

void ModelConfig::validate() const {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || vocab == 0 || max_seq == 0) {
        throw ConfigError("model config: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("model config: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
}

namespace {

void check_matrix(const DenseMatrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ConfigError("model weights: " + what + " has shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
}

void check_vector(const std::vector<double>& v, std::size_t n, const std::string& what) {
    if (v.size() != n) {
        throw ConfigError("model weights: " + what + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(n));
    }
}

}  // namespace

void ModelWeights::validate() const {
    config.validate();
    const std::size_t d = config.d_model;
    check_matrix(tok_emb, config.vocab, d, "tok_emb");
    if (config.pos_embedding == PosEmbedding::Learned) {
        check_matrix(pos_emb, config.max_seq, d, "pos_emb");
    } else if (!pos_emb.empty()) {
        throw ConfigError("model weights: pos_emb present but pos_embedding is none");
    }
    check_vector(lnf_gain, d, "lnf_gain");
    check_vector(lnf_bias, d, "lnf_bias");
    if (layers.size() != config.n_layers) {
        throw ConfigError("model weights: layer count does not match config");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string tag = "layer " + std::to_string(i);
        const LayerWeights& l = layers[i];
        check_vector(l.ln1_gain, d, tag + " ln1_gain");
        check_vector(l.ln1_bias, d, tag + " ln1_bias");
        check_vector(l.ln2_gain, d, tag + " ln2_gain");
        check_vector(l.ln2_bias, d, tag + " ln2_bias");
        check_matrix(l.qkv, 3 * d, d, tag + " qkv");
        check_matrix(l.out, d, d, tag + " out");
        check_matrix(l.up, config.d_ff, d, tag + " up");
        check_matrix(l.down, d, config.d_ff, tag + " down");
    }
}

// Generation order: tok_emb row-major, pos_emb row-major (when learned), then
// per layer qkv, out, up, down (row-major each). Gains/biases are constant
// (1, 0) and draw nothing.
ModelWeights init_random(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Prng rng(seed);
    const double scale = 0.02;
    auto fill = [&](DenseMatrix& m, std::size_t rows, std::size_t cols) {
        m = DenseMatrix(rows, cols);
        for (double& v : m.data()) v = scale * rng.gaussian();
    };

    ModelWeights w;
    w.config = cfg;
    fill(w.tok_emb, cfg.vocab, cfg.d_model);
    if (cfg.pos_embedding == PosEmbedding::Learned) fill(w.pos_emb, cfg.max_seq, cfg.d_model);
    w.lnf_gain.assign(cfg.d_model, 1.0);
    w.lnf_bias.assign(cfg.d_model, 0.0);
    w.layers.resize(cfg.n_layers);
    for (LayerWeights& l : w.layers) {
        l.ln1_gain.assign(cfg.d_model, 1.0);
        l.ln1_bias.assign(cfg.d_model, 0.0);
        l.ln2_gain.assign(cfg.d_model, 1.0);
        l.ln2_bias.assign(cfg.d_model, 0.0);
        fill(l.qkv, 3 * cfg.d_model, cfg.d_model);
        fill(l.out, cfg.d_model, cfg.d_model);
        fill(l.up, cfg.d_ff, cfg.d_model);
        fill(l.down, cfg.d_model, cfg.d_ff);
    }
    return w;
}

void save_model(const ModelWeights& w, const std::string& base_path) {
    w.validate();
    TensorContainer c;
    c.meta["kind"] = "gsi-toy-model";
    c.meta["config"] = {
        {"d_model", w.config.d_model},   {"n_layers", w.config.n_layers},
        {"n_heads", w.config.n_heads},   {"d_ff", w.config.d_ff},
        {"vocab", w.config.vocab},       {"max_seq", w.config.max_seq},
        {"pos_embedding", to_string(w.config.pos_embedding)},
    };
    c.add_matrix("tok_emb", w.tok_emb);
    if (w.config.pos_embedding == PosEmbedding::Learned) c.add_matrix("pos_emb", w.pos_emb);
    c.add_vector("lnf_gain", w.lnf_gain);
    c.add_vector("lnf_bias", w.lnf_bias);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        const LayerWeights& l = w.layers[i];
        c.add_vector(p + "ln1_gain", l.ln1_gain);
        c.add_vector(p + "ln1_bias", l.ln1_bias);
        c.add_matrix(p + "qkv", l.qkv);
        c.add_matrix(p + "out", l.out);
        c.add_vector(p + "ln2_gain", l.ln2_gain);
        c.add_vector(p + "ln2_bias", l.ln2_bias);
        c.add_matrix(p + "up", l.up);
        c.add_matrix(p + "down", l.down);
    }
    c.save(base_path);
}

ModelWeights load_model(const std::string& base_path) {
    TensorContainer c = TensorContainer::load(base_path);
    if (c.meta.value("kind", "") != "gsi-toy-model") {
        throw IoError("artifact " + base_path + " is not a model container");
    }
    if (!c.meta.contains("config")) throw IoError("model container: missing config block");
    const auto& jc = c.meta["config"];
    ModelWeights w;
    try {
        w.config.d_model = jc.at("d_model").get<std::size_t>();
        w.config.n_layers = jc.at("n_layers").get<std::size_t>();
        w.config.n_heads = jc.at("n_heads").get<std::size_t>();
        w.config.d_ff = jc.at("d_ff").get<std::size_t>();
        w.config.vocab = jc.at("vocab").get<std::size_t>();
        w.config.max_seq = jc.at("max_seq").get<std::size_t>();
        w.config.pos_embedding = parse_pos_embedding(jc.at("pos_embedding").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model container: bad config block: ") + e.what());
    }

    w.tok_emb = c.matrix("tok_emb");
    if (w.config.pos_embedding == PosEmbedding::Learned) w.pos_emb = c.matrix("pos_emb");
    w.lnf_gain = c.tensor("lnf_gain");
    w.lnf_bias = c.tensor("lnf_bias");
    w.layers.resize(w.config.n_layers);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        LayerWeights& l = w.layers[i];
        l.ln1_gain = c.tensor(p + "ln1_gain");
        l.ln1_bias = c.tensor(p + "ln1_bias");
        l.qkv = c.matrix(p + "qkv");
        l.out = c.matrix(p + "out");
        l.ln2_gain = c.tensor(p + "ln2_gain");
        l.ln2_bias = c.tensor(p + "ln2_bias");
        l.up = c.matrix(p + "up");
        l.down = c.matrix(p + "down");
    }
    w.validate();
    return w;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias) {
    if (x.size() != gain.size() || x.size() != bias.size() || x.empty()) {
        throw ConfigError("layer_norm: length mismatch");
    }
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * (x[i] - mean) * inv + bias[i];
    return y;
}

double gelu(double x) {
    const double kSqrt2OverPi = std::sqrt(2.0 / 3.141592653589793238462643383279502884);
    return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

}  // namespace gsi

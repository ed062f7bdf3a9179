#include "gsi/runtime.hpp"

#include <cmath>
#include <string>

#include "gsi/container.hpp"
#include "gsi/error.hpp"

namespace gsi {

const char* to_string(BasisStream s) {
    return s == BasisStream::Stacked ? "stacked" : "attention_only";
}

BasisStream parse_basis_stream(const std::string& s) {
    if (s == "stacked") return BasisStream::Stacked;
    if (s == "attention_only") return BasisStream::AttentionOnly;
    throw ConfigError("unknown basis stream '" + s + "' (expected stacked|attention_only)");
}

void GsiRuntime::reset_stats() {
    for (LayerRuntime& l : layers) {
        for (MapRuntime* m : {&l.qkv, &l.attn_out, &l.mlp_up}) {
            m->stats = LayerStats{};
            m->records.clear();
        }
    }
    image_reads = 0;
    ungated_weight_bytes = 0;
    bound_check.checked = 0;
    bound_check.violations = 0;
    bound_check.worst_ratio = 0.0;
}

namespace {

void check_tokens(const ModelConfig& cfg, std::span<const std::int32_t> tokens) {
    if (tokens.empty()) throw ConfigError("forward: empty token sequence");
    if (tokens.size() > cfg.max_seq) {
        throw ConfigError("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(cfg.max_seq));
    }
    for (std::int32_t t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
            throw ConfigError("forward: token id " + std::to_string(t) + " outside vocab");
        }
    }
}

// Route one linear map through the gate when gating is active, dense
// otherwise. Baseline purity is observable: only fast paths touch the cached
// image, counted in rt.image_reads.
std::vector<double> dispatch(const DenseMatrix& w, std::span<const double> x, GsiRuntime& rt,
                             std::size_t layer, MapRuntime LayerRuntime::*map) {
    if (!rt.gating_active()) return matvec(w, x);
    LayerRuntime& lr = rt.layers[layer];
    MapRuntime& mr = lr.*map;
    GatedOutput out = gated_forward(x, w, mr.image, lr.basis, rt.mode);
    if (out.record.path == GatePath::Fast || out.record.path == GatePath::ForcedFast) {
        ++rt.image_reads;
    }
    if (rt.bound_check.enabled && out.record.path == GatePath::Fast) {
        if (mr.w_spectral < 0.0) mr.w_spectral = spectral_norm(w);
        const std::vector<double> exact = matvec(w, x);
        double err = 0.0;
        for (std::size_t i = 0; i < exact.size(); ++i) {
            err += (out.y[i] - exact[i]) * (out.y[i] - exact[i]);
        }
        err = std::sqrt(err);
        const double bound = mr.w_spectral * rt.mode.epsilon * norm2(x);
        ++rt.bound_check.checked;
        if (err > bound * (1.0 + 1e-6)) ++rt.bound_check.violations;
        const double ratio = bound > 0.0 ? err / bound : (err > 0.0 ? 1e12 : 0.0);
        if (ratio > rt.bound_check.worst_ratio) rt.bound_check.worst_ratio = ratio;
    }
    mr.stats.add(out.record);
    mr.records.push_back(out.record);
    return std::move(out.y);
}

struct BlockBuffers {
    std::vector<double> attn;  // d
};

// Causal single-position attention of q against the first `length` cached
// rows. Head loop outside, source positions ascending inside, so batch and
// incremental execution perform identical float operations.
void attend(std::span<const double> q, const DenseMatrix& k_cache, const DenseMatrix& v_cache,
            std::size_t length, std::size_t n_heads, std::vector<double>& out) {
    const std::size_t d = q.size();
    const std::size_t dh = d / n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    out.assign(d, 0.0);
    std::vector<double> scores(length);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t base = h * dh;
        double peak = -1e300;
        for (std::size_t s = 0; s < length; ++s) {
            double dotqk = 0.0;
            auto krow = k_cache.row(s);
            for (std::size_t j = 0; j < dh; ++j) dotqk += q[base + j] * krow[base + j];
            scores[s] = dotqk * inv_sqrt_dh;
            if (scores[s] > peak) peak = scores[s];
        }
        double z = 0.0;
        for (std::size_t s = 0; s < length; ++s) {
            scores[s] = std::exp(scores[s] - peak);
            z += scores[s];
        }
        for (std::size_t s = 0; s < length; ++s) {
            const double wgt = scores[s] / z;
            auto vrow = v_cache.row(s);
            for (std::size_t j = 0; j < dh; ++j) out[base + j] += wgt * vrow[base + j];
        }
    }
}

// One decoder block applied to the residual row x at `position`, with K/V
// appended to the caches before attending.
void block_forward(const ModelWeights& w, GsiRuntime& rt, std::size_t layer,
                   std::vector<double>& x, DenseMatrix& k_cache, DenseMatrix& v_cache,
                   std::size_t position, std::vector<double>* capture_ln1,
                   std::vector<double>* capture_ln2) {
    const ModelConfig& cfg = w.config;
    const std::size_t d = cfg.d_model;
    const LayerWeights& lw = w.layers[layer];

    std::vector<double> a = layer_norm(x, lw.ln1_gain, lw.ln1_bias);
    if (capture_ln1) *capture_ln1 = a;
    const std::vector<double> qkv = dispatch(lw.qkv, a, rt, layer, &LayerRuntime::qkv);
    for (std::size_t j = 0; j < d; ++j) {
        k_cache.at(position, j) = qkv[d + j];
        v_cache.at(position, j) = qkv[2 * d + j];
    }
    std::vector<double> attn;
    attend(std::span<const double>(qkv.data(), d), k_cache, v_cache, position + 1, cfg.n_heads, attn);
    const std::vector<double> o = dispatch(lw.out, attn, rt, layer, &LayerRuntime::attn_out);
    for (std::size_t j = 0; j < d; ++j) x[j] += o[j];

    std::vector<double> m = layer_norm(x, lw.ln2_gain, lw.ln2_bias);
    if (capture_ln2) *capture_ln2 = m;
    std::vector<double> h = dispatch(lw.up, m, rt, layer, &LayerRuntime::mlp_up);
    for (double& v : h) v = gelu(v);
    const std::vector<double> u = matvec(lw.down, h);  // always dense, see LayerRuntime
    if (rt.gating_active()) {
        rt.ungated_weight_bytes += static_cast<std::uint64_t>(d) * cfg.d_ff * sizeof(double);
    }
    for (std::size_t j = 0; j < d; ++j) x[j] += u[j];
}

std::vector<double> embed(const ModelWeights& w, std::int32_t token, std::size_t position) {
    const std::size_t d = w.config.d_model;
    std::vector<double> x(d);
    auto erow = w.tok_emb.row(static_cast<std::size_t>(token));
    for (std::size_t j = 0; j < d; ++j) x[j] = erow[j];
    if (w.config.pos_embedding == PosEmbedding::Learned) {
        auto prow = w.pos_emb.row(position);
        for (std::size_t j = 0; j < d; ++j) x[j] += prow[j];
    }
    return x;
}

std::vector<double> head_logits(const ModelWeights& w, std::span<const double> x) {
    const std::vector<double> f = layer_norm(x, w.lnf_gain, w.lnf_bias);
    return matvec(w.tok_emb, f);  // tied embeddings
}

void check_runtime(const ModelWeights& w, const GsiRuntime& rt) {
    if (rt.gating_active() && rt.layers.size() != w.config.n_layers) {
        throw ConfigError("runtime layer count does not match the model");
    }
}

}  // namespace

DenseMatrix forward(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens,
                    ActivationCapture* capture) {
    check_tokens(w.config, tokens);
    check_runtime(w, rt);
    const ModelConfig& cfg = w.config;
    const std::size_t T = tokens.size();

    if (capture) {
        capture->ln1.assign(cfg.n_layers, DenseMatrix(T, cfg.d_model));
        capture->ln2.assign(cfg.n_layers, DenseMatrix(T, cfg.d_model));
    }

    DecodeState state = make_decode_state(w);
    DenseMatrix logits(T, cfg.vocab);
    std::vector<double> ln1_row, ln2_row;
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> x = embed(w, tokens[t], t);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            block_forward(w, rt, l, x, state.k_cache[l], state.v_cache[l], t,
                          capture ? &ln1_row : nullptr, capture ? &ln2_row : nullptr);
            if (capture) {
                for (std::size_t j = 0; j < cfg.d_model; ++j) {
                    capture->ln1[l].at(t, j) = ln1_row[j];
                    capture->ln2[l].at(t, j) = ln2_row[j];
                }
            }
        }
        const std::vector<double> row = head_logits(w, x);
        for (std::size_t j = 0; j < cfg.vocab; ++j) logits.at(t, j) = row[j];
    }
    return logits;
}

DecodeState make_decode_state(const ModelWeights& w) {
    DecodeState st;
    st.k_cache.assign(w.config.n_layers, DenseMatrix(w.config.max_seq, w.config.d_model));
    st.v_cache.assign(w.config.n_layers, DenseMatrix(w.config.max_seq, w.config.d_model));
    return st;
}

std::vector<double> decode_step(const ModelWeights& w, GsiRuntime& rt, DecodeState& state,
                                std::int32_t token) {
    const ModelConfig& cfg = w.config;
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab) {
        throw ConfigError("decode_step: token id outside vocab");
    }
    if (state.length >= cfg.max_seq) throw ConfigError("decode_step: context window exhausted");
    check_runtime(w, rt);

    const std::size_t pos = state.length;
    std::vector<double> x = embed(w, token, pos);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        block_forward(w, rt, l, x, state.k_cache[l], state.v_cache[l], pos, nullptr, nullptr);
    }
    state.length = pos + 1;
    return head_logits(w, x);
}

GsiRuntime calibrate(const ModelWeights& w, std::span<const std::int32_t> tokens,
                     const CalibrationOptions& opt) {
    w.validate();
    const std::size_t d = w.config.d_model;
    if (opt.k < 1 || opt.k > d) {
        throw ConfigError("calibrate: k must be in [1, d_model], got " + std::to_string(opt.k));
    }
    if (tokens.size() < opt.k) {
        throw ConfigError("calibrate: need at least k = " + std::to_string(opt.k) +
                          " calibration tokens, got " + std::to_string(tokens.size()));
    }
    if (!(opt.eta > 0.0 && opt.eta < 1.0)) throw ConfigError("calibrate: eta must be in (0, 1)");
    const std::size_t k_max = opt.k_max == 0 ? d : opt.k_max;
    if (k_max < opt.k || k_max > d) {
        throw ConfigError("calibrate: k_max must be in [k, d_model]");
    }

    // Dense capture pass; the runtime being built plays no part in it.
    GsiRuntime dense;
    ActivationCapture capture;
    forward(w, dense, tokens, &capture);

    const std::size_t T = tokens.size();
    auto stream_matrix = [&](std::size_t layer) {
        if (opt.stream == BasisStream::AttentionOnly) return capture.ln1[layer];
        DenseMatrix x(2 * T, d);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                x.at(t, j) = capture.ln1[layer].at(t, j);
                x.at(T + t, j) = capture.ln2[layer].at(t, j);
            }
        }
        return x;
    };

    GsiRuntime rt;
    rt.mode = ExecutionMode::baseline();
    rt.basis_stream = opt.stream;
    rt.k = opt.k;
    rt.k_max = k_max;
    rt.eta = opt.eta;
    rt.cascade = opt.cascade;
    rt.layers.resize(w.config.n_layers);

    for (std::size_t l = 0; l < w.config.n_layers; ++l) {
        const DenseMatrix x = stream_matrix(l);
        if (l == 0 || !opt.cascade) {
            rt.layers[l].basis = build_basis(x, opt.k);
            rt.trace.layers.push_back({BasisBuildOrigin::FullSvd, 0, opt.k, false});
        } else {
            InheritResult inh = inherit_and_correct(rt.layers[l - 1].basis, x, opt.eta, k_max);
            rt.layers[l].basis = std::move(inh.basis);
            rt.trace.layers.push_back(inh.entry);
        }
        const LayerWeights& lw = w.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        rt.layers[l].qkv.image = cache_image(lw.qkv, rt.layers[l].basis, p + "qkv");
        rt.layers[l].attn_out.image = cache_image(lw.out, rt.layers[l].basis, p + "out");
        rt.layers[l].mlp_up.image = cache_image(lw.up, rt.layers[l].basis, p + "up");
    }
    return rt;
}

std::vector<double> stream_effective_ranks(const ModelWeights& w,
                                           std::span<const std::int32_t> tokens, BasisStream stream) {
    GsiRuntime dense;
    ActivationCapture capture;
    forward(w, dense, tokens, &capture);
    const std::size_t T = tokens.size();
    const std::size_t d = w.config.d_model;
    std::vector<double> out;
    for (std::size_t l = 0; l < w.config.n_layers; ++l) {
        DenseMatrix x;
        if (stream == BasisStream::AttentionOnly) {
            x = capture.ln1[l];
        } else {
            x = DenseMatrix(2 * T, d);
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t j = 0; j < d; ++j) {
                    x.at(t, j) = capture.ln1[l].at(t, j);
                    x.at(T + t, j) = capture.ln2[l].at(t, j);
                }
            }
        }
        out.push_back(effective_rank(thin_svd(x).s));
    }
    return out;
}

void save_runtime(const GsiRuntime& rt, const std::string& base_path) {
    if (!rt.gating_active()) throw ConfigError("save_runtime: runtime has no calibrated layers");
    TensorContainer c;
    c.meta["kind"] = "gsi-runtime";
    c.meta["k"] = rt.k;
    c.meta["k_max"] = rt.k_max;
    c.meta["eta"] = rt.eta;
    c.meta["cascade"] = rt.cascade;
    c.meta["basis_stream"] = to_string(rt.basis_stream);
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < rt.layers.size(); ++l) {
        const LayerRuntime& lr = rt.layers[l];
        nlohmann::ordered_json jl;
        jl["basis_origin"] = to_string(lr.basis.origin());
        jl["basis_fingerprint"] = lr.basis.fingerprint();
        jl["rank"] = lr.basis.rank();
        layers.push_back(std::move(jl));
        const std::string p = "layer" + std::to_string(l) + ".";
        c.add_matrix(p + "basis", lr.basis.columns());
        c.add_matrix(p + "qkv.image", lr.qkv.image.matrix);
        c.add_matrix(p + "out.image", lr.attn_out.image.matrix);
        c.add_matrix(p + "up.image", lr.mlp_up.image.matrix);
    }
    c.meta["layers"] = std::move(layers);
    nlohmann::ordered_json trace = nlohmann::ordered_json::array();
    for (const CascadeEntry& e : rt.trace.layers) {
        trace.push_back({{"origin", to_string(e.origin)},
                         {"acceptances", e.acceptances},
                         {"final_rank", e.final_rank},
                         {"exhausted", e.exhausted}});
    }
    c.meta["trace"] = std::move(trace);
    c.save(base_path);
}

GsiRuntime load_runtime(const std::string& base_path) {
    TensorContainer c = TensorContainer::load(base_path);
    if (c.meta.value("kind", "") != "gsi-runtime") {
        throw IoError("artifact " + base_path + " is not a runtime container");
    }
    GsiRuntime rt;
    try {
        rt.k = c.meta.at("k").get<std::size_t>();
        rt.k_max = c.meta.at("k_max").get<std::size_t>();
        rt.eta = c.meta.at("eta").get<double>();
        rt.cascade = c.meta.at("cascade").get<bool>();
        rt.basis_stream = parse_basis_stream(c.meta.at("basis_stream").get<std::string>());
        const auto& layers = c.meta.at("layers");
        rt.layers.resize(layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            BasisOrigin origin = BasisOrigin::Calibrated;
            const std::string os = layers[l].at("basis_origin").get<std::string>();
            if (os == "inherited") origin = BasisOrigin::Inherited;
            if (os == "streamed") origin = BasisOrigin::Streamed;
            LayerRuntime& lr = rt.layers[l];
            lr.basis = SubspaceBasis::from_columns(c.matrix(p + "basis"), origin);
            const std::uint64_t recorded = layers[l].at("basis_fingerprint").get<std::uint64_t>();
            if (recorded != lr.basis.fingerprint()) {
                throw StaleCacheError("runtime container: basis fingerprint mismatch at layer " +
                                      std::to_string(l));
            }
            lr.qkv.image = {c.matrix(p + "qkv.image"), p + "qkv", lr.basis.fingerprint()};
            lr.attn_out.image = {c.matrix(p + "out.image"), p + "out", lr.basis.fingerprint()};
            lr.mlp_up.image = {c.matrix(p + "up.image"), p + "up", lr.basis.fingerprint()};
        }
        for (const auto& e : c.meta.at("trace")) {
            CascadeEntry entry;
            entry.origin = e.at("origin").get<std::string>() == "inherited"
                               ? BasisBuildOrigin::Inherited
                               : BasisBuildOrigin::FullSvd;
            entry.acceptances = e.at("acceptances").get<std::size_t>();
            entry.final_rank = e.at("final_rank").get<std::size_t>();
            entry.exhausted = e.at("exhausted").get<bool>();
            rt.trace.layers.push_back(entry);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("runtime container " + base_path + ": bad metadata: " + e.what());
    }
    return rt;
}

}  // namespace gsi

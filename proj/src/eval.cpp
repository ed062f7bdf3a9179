#include "gsi/eval.hpp"

#include <cmath>

#include "gsi/error.hpp"

namespace gsi {

double perplexity_from_logits(const DenseMatrix& logits, std::span<const std::int32_t> tokens) {
    if (tokens.size() < 2) throw ConfigError("perplexity: need at least two tokens");
    if (logits.rows() != tokens.size()) throw ConfigError("perplexity: logits/token length mismatch");
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        auto row = logits.row(t);
        const std::int32_t target = tokens[t + 1];
        if (target < 0 || static_cast<std::size_t>(target) >= logits.cols()) {
            throw ConfigError("perplexity: target token outside vocab");
        }
        double peak = row[0];
        for (double v : row) peak = std::max(peak, v);
        double z = 0.0;
        for (double v : row) z += std::exp(v - peak);
        nll -= row[static_cast<std::size_t>(target)] - peak - std::log(z);
    }
    return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

double perplexity(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens) {
    const DenseMatrix logits = forward(w, rt, tokens);
    return perplexity_from_logits(logits, tokens);
}

std::size_t argmax_lowest(std::span<const double> row) {
    if (row.empty()) throw ConfigError("argmax: empty row");
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

double top1_agreement(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ConfigError("top1_agreement: logit shapes differ");
    }
    if (a.rows() == 0) throw ConfigError("top1_agreement: no rows");
    std::size_t agree = 0;
    for (std::size_t t = 0; t < a.rows(); ++t) {
        if (argmax_lowest(a.row(t)) == argmax_lowest(b.row(t))) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(a.rows());
}

std::vector<std::int32_t> greedy_generate(const ModelWeights& w, GsiRuntime& rt,
                                          std::span<const std::int32_t> prompt, std::size_t n) {
    if (prompt.empty()) throw ConfigError("greedy_generate: empty prompt");
    if (n < 1) throw ConfigError("greedy_generate: need at least one step");
    if (prompt.size() + n > w.config.max_seq) {
        throw ConfigError("greedy_generate: prompt plus continuation exceeds max_seq");
    }
    DecodeState state = make_decode_state(w);
    std::vector<double> logits;
    for (std::int32_t t : prompt) logits = decode_step(w, rt, state, t);
    std::vector<std::int32_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t next = static_cast<std::int32_t>(argmax_lowest(logits));
        out.push_back(next);
        if (i + 1 < n) logits = decode_step(w, rt, state, next);
    }
    return out;
}

EvalReport evaluate(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens,
                    const EvalOptions& opt) {
    if (!rt.gating_active()) throw ConfigError("evaluate: runtime has no calibrated layers");
    if (tokens.size() < 2) throw ConfigError("evaluate: need at least two eval tokens");
    if (opt.gen_prompt < 1 || opt.gen_prompt > tokens.size()) {
        throw ConfigError("evaluate: gen_prompt must be in [1, eval length]");
    }
    if (opt.gen_tokens < 1) throw ConfigError("evaluate: gen_tokens must be positive");

    const ExecutionMode target = rt.mode;
    const std::span<const std::int32_t> prompt = tokens.subspan(0, opt.gen_prompt);

    rt.mode = ExecutionMode::baseline();
    rt.reset_stats();
    const DenseMatrix logits_base = forward(w, rt, tokens);
    const std::vector<std::int32_t> gen_base = greedy_generate(w, rt, prompt, opt.gen_tokens);

    rt.mode = target;
    rt.reset_stats();
    const DenseMatrix logits_gsi = forward(w, rt, tokens);

    EvalReport rep;
    std::uint64_t total_dispatches = 0;
    std::uint64_t fastish = 0;
    std::uint64_t bytes_base = 0, bytes_actual = 0, bytes_overhead = 0;
    double rho_sum = 0.0;
    for (const LayerRuntime& lr : rt.layers) {
        LayerStats layer;
        for (const MapRuntime* m : {&lr.qkv, &lr.attn_out, &lr.mlp_up}) layer.merge(m->stats);
        LayerEvalStats ls;
        ls.fast_fraction = layer.fast_fraction();
        ls.mean_rho = layer.mean_rho();
        ls.bytes_baseline = layer.bytes_baseline;
        ls.bytes_actual = layer.bytes_actual;
        ls.bytes_gate_overhead = layer.bytes_gate_overhead;
        rep.layers.push_back(ls);
        total_dispatches += layer.total;
        fastish += layer.fast + layer.forced_fast;
        bytes_base += layer.bytes_baseline;
        bytes_actual += layer.bytes_actual;
        bytes_overhead += layer.bytes_gate_overhead;
        rho_sum += layer.rho_sum;
    }
    const std::uint64_t ungated = rt.ungated_weight_bytes;
    rep.fast_fraction = static_cast<double>(fastish) / static_cast<double>(total_dispatches);
    rep.mean_rho = rho_sum / static_cast<double>(total_dispatches);
    rep.s_eff = static_cast<double>(bytes_base) / static_cast<double>(bytes_actual);
    rep.s_eff_all_linear = static_cast<double>(bytes_base + ungated) /
                           static_cast<double>(bytes_actual + ungated);
    rep.bytes_gate_overhead = bytes_overhead;

    const std::vector<std::int32_t> gen_gsi = greedy_generate(w, rt, prompt, opt.gen_tokens);

    rep.ppl_baseline = perplexity_from_logits(logits_base, tokens);
    rep.ppl_gsi = perplexity_from_logits(logits_gsi, tokens);
    rep.ppl_ratio = rep.ppl_gsi / rep.ppl_baseline;
    rep.top1 = top1_agreement(logits_gsi, logits_base);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < gen_gsi.size(); ++i) {
        if (gen_gsi[i] == gen_base[i]) ++agree;
    }
    rep.gen_agreement = static_cast<double>(agree) / static_cast<double>(gen_gsi.size());
    return rep;
}

}  // namespace gsi

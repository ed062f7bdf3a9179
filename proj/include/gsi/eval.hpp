#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsi/matrix.hpp"
#include "gsi/runtime.hpp"

namespace gsi {

// Teacher-forcing perplexity: exp of the mean next-token NLL over positions
// 0..T-2. Needs at least two tokens.
double perplexity_from_logits(const DenseMatrix& logits, std::span<const std::int32_t> tokens);
double perplexity(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens);

// Row index of the maximum; ties break toward the lowest index.
std::size_t argmax_lowest(std::span<const double> row);

// Fraction of rows whose argmax agrees; shapes must match.
double top1_agreement(const DenseMatrix& a, const DenseMatrix& b);

// KV-cached greedy continuation of the prompt by n tokens.
std::vector<std::int32_t> greedy_generate(const ModelWeights& w, GsiRuntime& rt,
                                          std::span<const std::int32_t> prompt, std::size_t n);

struct EvalOptions {
    std::size_t gen_prompt = 8;   // prompt length taken from the head of the eval tokens
    std::size_t gen_tokens = 32;  // greedy continuation length
};

struct LayerEvalStats {
    double fast_fraction = 0.0;
    double mean_rho = 0.0;
    std::uint64_t bytes_baseline = 0;
    std::uint64_t bytes_actual = 0;
    std::uint64_t bytes_gate_overhead = 0;
};

// Quality and byte-accounting summary of one execution mode against the dense
// baseline of the same model.
struct EvalReport {
    double ppl_baseline = 0.0;
    double ppl_gsi = 0.0;
    double ppl_ratio = 0.0;
    double top1 = 0.0;
    double gen_agreement = 0.0;
    double fast_fraction = 0.0;
    double mean_rho = 0.0;
    // Realized weight-read speedup over the gated maps (gate overhead
    // excluded, tracked separately).
    double s_eff = 0.0;
    // Same ratio with the always-dense mlp-down volume folded into both
    // sides; the vocabulary head is a separate cost component and is not a
    // weight read in either accounting.
    double s_eff_all_linear = 0.0;
    std::uint64_t bytes_gate_overhead = 0;
    std::vector<LayerEvalStats> layers;
};

// Runs the dense baseline and rt.mode over the same tokens and compares.
// Gate statistics are taken from the teacher-forcing pass; the greedy pass
// contributes only the generation-agreement figure.
EvalReport evaluate(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens,
                    const EvalOptions& opt);

}  // namespace gsi

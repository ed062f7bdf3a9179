#pragma once

#include <cstdint>
#include <vector>

#include "gsi/matrix.hpp"
#include "gsi/model.hpp"

namespace gsi {

// Constructs a model whose every gated activation stream lies exactly in a
// planted subspace of known dimension, so the right answers for calibration
// and gating are known in closed form.
//
// Construction: pick an orthonormal d x r plane P orthogonal to the all-ones
// direction. All square maps are P A P^T, mlp up is Q B P^T and mlp down is
// P C Q^T for an orthonormal d_ff x r plane Q, token embeddings are P c_i.
// Because each map's image lies in span(P), the residual stream, both
// layer-norm outputs (the ones-orthogonality makes layer norm a pure
// rescaling) and every gated input stay in span(P) through the whole network,
// up to roundoff. Attention uses a single head so mixed values stay in the
// span as well.
//
// Embedding coefficients c_i are the vertices of a regular simplex (pairwise
// cosine -1/r), which gives the baseline model a sharp self-token preference
// on repetitive data. Requires vocab <= planted_rank + 1.
struct PlantedSpec {
    std::size_t d_model = 48;
    std::size_t planted_rank = 8;
    std::size_t n_layers = 3;
    std::size_t d_ff = 64;
    std::size_t vocab = 0;  // 0: planted_rank + 1
    std::size_t max_seq = 256;
    std::uint64_t seed = 1;
    double mix_scale = 0.25;  // strength of the attention/mlp contributions
};

struct PlantedModel {
    ModelWeights weights;
    DenseMatrix plane;  // d_model x planted_rank, orthonormal
};

PlantedModel make_planted_model(const PlantedSpec& spec);

// Run-structured stream: random token repeated `run` times, then a fresh
// draw. The repetition gives a dense model predictable next tokens.
std::vector<std::int32_t> block_tokens(std::size_t length, std::size_t run, std::size_t vocab,
                                       std::uint64_t seed);

// IID uniform stream (negative control: nothing to predict).
std::vector<std::int32_t> uniform_tokens(std::size_t length, std::size_t vocab, std::uint64_t seed);

}  // namespace gsi

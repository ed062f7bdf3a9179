#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsi/matrix.hpp"

namespace gsi {

enum class PosEmbedding { None, Learned };

const char* to_string(PosEmbedding p);
PosEmbedding parse_pos_embedding(const std::string& s);

struct ModelConfig {
    std::size_t d_model = 0;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_ff = 0;
    std::size_t vocab = 0;
    std::size_t max_seq = 0;
    PosEmbedding pos_embedding = PosEmbedding::Learned;

    void validate() const;
};

// Pre-norm decoder block weights. qkv is the fused (3 d_model) x d_model
// projection; rows [0,d), [d,2d), [2d,3d) are Q, K, V.
struct LayerWeights {
    std::vector<double> ln1_gain, ln1_bias;
    DenseMatrix qkv;   // 3d x d
    DenseMatrix out;   // d x d
    std::vector<double> ln2_gain, ln2_bias;
    DenseMatrix up;    // d_ff x d
    DenseMatrix down;  // d x d_ff
};

// Embeddings are tied: tok_emb doubles as the vocabulary head.
struct ModelWeights {
    ModelConfig config;
    DenseMatrix tok_emb;  // vocab x d
    DenseMatrix pos_emb;  // max_seq x d (empty when pos_embedding == None)
    std::vector<double> lnf_gain, lnf_bias;
    std::vector<LayerWeights> layers;

    void validate() const;
};

// Gaussian init, N(0, 0.02^2) weights and embeddings, unit layer-norm gains,
// zero biases. Generation order is fixed (documented in the .cpp), so a seed
// pins the model bit-for-bit.
ModelWeights init_random(const ModelConfig& cfg, std::uint64_t seed);

void save_model(const ModelWeights& w, const std::string& base_path);
ModelWeights load_model(const std::string& base_path);

// LayerNorm with population variance and epsilon 1e-5.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias);

// tanh-approximated GELU.
double gelu(double x);

}  // namespace gsi

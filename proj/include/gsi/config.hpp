#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsi/cost_model.hpp"
#include "gsi/eval.hpp"
#include "gsi/model.hpp"
#include "gsi/runtime.hpp"
#include "gsi/synthetic.hpp"

namespace gsi {

// Token source: a JSON file of ids, or a generated stream.
struct TokensSpec {
    std::string type;  // "file" | "blocks" | "uniform"
    std::string path;
    std::size_t length = 0;
    std::size_t run = 0;
    std::size_t vocab = 0;  // 0: model vocab
    std::uint64_t seed = 0;
};

// Model source: random init, planted-subspace synthetic, or a container.
struct ModelSpec {
    std::string type;  // "random" | "planted" | "container"
    ModelConfig config;
    std::uint64_t seed = 1;
    std::string path;
    PlantedSpec planted;
};

struct SweepSpec {
    std::vector<std::size_t> k;
    std::vector<double> epsilon;
    std::vector<std::string> modes;  // subset of baseline|gated|static
};

struct BasisSpec {
    std::size_t k = 0;  // 0: first sweep k
    bool cascade = false;
    double eta = 0.25;
    BasisStream stream = BasisStream::Stacked;
    std::size_t k_max = 0;
};

// Cost-table inputs: either literal per-layer loads, or a pointer into a
// sweep sidecar (stats_path plus the grid point to select).
struct CostModelSpec {
    bool present = false;
    std::vector<LayerLoad> weight_layers;
    double attention_seconds = 0.0;
    double vocab_seconds = 0.0;
    double norm_seconds = 0.0;
    double attention_speedup = 1.0;
    std::string stats_path;
    std::size_t select_k = 0;
    double select_epsilon = 0.0;
};

struct ExperimentConfig {
    ModelSpec model;
    TokensSpec calibration;
    TokensSpec eval;
    EvalOptions eval_options;
    SweepSpec sweep;
    BasisSpec basis;
    HardwareProfile hardware = HardwareProfile::mi300x();
    CostModelSpec costmodel;
    std::string output_dir = "out";
    std::size_t workers = 1;
};

// Parse and validate; GSI_OUTPUT_DIR and GSI_WORKERS environment variables
// override the corresponding fields.
ExperimentConfig load_config(const std::string& path);

std::vector<std::int32_t> materialize_tokens(const TokensSpec& spec, std::size_t model_vocab);
ModelWeights materialize_model(const ModelSpec& spec);

}  // namespace gsi

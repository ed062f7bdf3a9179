#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsi/cascade.hpp"
#include "gsi/gated_map.hpp"
#include "gsi/model.hpp"
#include "gsi/subspace.hpp"

namespace gsi {

// Which activation streams feed the calibration SVD: the attention and MLP
// layer-norm outputs stacked together (default), or the attention stream only.
enum class BasisStream { Stacked, AttentionOnly };

const char* to_string(BasisStream s);
BasisStream parse_basis_stream(const std::string& s);

// Per-weight gating state. The spectral norm is computed lazily by the
// error-bound checker and cached here.
struct MapRuntime {
    CachedImage image;
    LayerStats stats;
    std::vector<GateRecord> records;
    double w_spectral = -1.0;
};

// One decoder block's gating state. The three maps whose input is the
// d_model-wide stream (fused qkv, attention out, mlp up) share the layer
// basis. mlp down consumes the d_ff-wide hidden vector, which no shared
// d_model basis can represent, so it always runs dense and is accounted as
// ungated volume.
struct LayerRuntime {
    SubspaceBasis basis;
    MapRuntime qkv;
    MapRuntime attn_out;
    MapRuntime mlp_up;
};

// Optional per-dispatch verification that fast-path error stays within
// ||W||_2 * epsilon * ||x||.
struct BoundCheck {
    bool enabled = false;
    std::uint64_t checked = 0;
    std::uint64_t violations = 0;
    double worst_ratio = 0.0;  // error / bound, max over checked dispatches
};

struct GsiRuntime {
    ExecutionMode mode = ExecutionMode::baseline();
    std::vector<LayerRuntime> layers;  // empty: plain dense execution
    CascadeTrace trace;
    BasisStream basis_stream = BasisStream::Stacked;
    std::size_t k = 0;
    std::size_t k_max = 0;
    double eta = 0.25;
    bool cascade = false;

    // Instrumentation, reset via reset_stats().
    std::uint64_t image_reads = 0;           // fast-path cached-image reads
    std::uint64_t ungated_weight_bytes = 0;  // dense mlp-down reads
    BoundCheck bound_check;

    bool gating_active() const { return !layers.empty(); }
    void reset_stats();
};

// Full-sequence forward pass with materialized causal attention; returns the
// T x vocab logit matrix. capture, when non-null, receives the per-layer
// layer-norm output rows used for calibration.
struct ActivationCapture {
    std::vector<DenseMatrix> ln1;  // per layer, T x d
    std::vector<DenseMatrix> ln2;
};

DenseMatrix forward(const ModelWeights& w, GsiRuntime& rt, std::span<const std::int32_t> tokens,
                    ActivationCapture* capture = nullptr);

// Incremental decoding against a KV cache.
struct DecodeState {
    std::vector<DenseMatrix> k_cache;  // per layer, max_seq x d
    std::vector<DenseMatrix> v_cache;
    std::size_t length = 0;
};

DecodeState make_decode_state(const ModelWeights& w);

// Appends one token and returns its logits row.
std::vector<double> decode_step(const ModelWeights& w, GsiRuntime& rt, DecodeState& state,
                                std::int32_t token);

struct CalibrationOptions {
    std::size_t k = 0;
    bool cascade = false;
    double eta = 0.25;
    BasisStream stream = BasisStream::Stacked;
    std::size_t k_max = 0;  // 0: grow up to d_model
};

// Run the calibration tokens through the dense model, build per-layer bases
// from the captured streams (layer 0 by SVD; deeper layers by SVD or by
// inheritance + correction when cascade is on), and cut cached images for the
// three shared-basis maps of every layer. Requires tokens.size() >= k.
GsiRuntime calibrate(const ModelWeights& w, std::span<const std::int32_t> tokens,
                     const CalibrationOptions& opt);

// Per-layer effective rank of the calibration stream (diagnostic).
std::vector<double> stream_effective_ranks(const ModelWeights& w,
                                           std::span<const std::int32_t> tokens, BasisStream stream);

void save_runtime(const GsiRuntime& rt, const std::string& base_path);
GsiRuntime load_runtime(const std::string& base_path);

}  // namespace gsi

#pragma once

#include <span>
#include <string>
#include <vector>

namespace gsi {

// Analytical accelerator profile for deployment estimates. element_bytes is
// the deployed element width (2 for 16-bit weights); the runtime simulator's
// own byte counters always use 8-byte doubles and are unrelated.
struct HardwareProfile {
    std::string name;
    double bandwidth_bytes_per_s = 0.0;
    double compute_flops_per_s = 0.0;
    double element_bytes = 2.0;

    // Arithmetic intensity (flops/byte) where a kernel stops being
    // bandwidth bound.
    double crossover_intensity() const;

    static HardwareProfile mi300x();
};

// Weight-read speedup of one layer whose inputs take the fast path with
// probability f: reads shrink from d to k bytes-per-row on that fraction.
//   S = 1 / (f * k / d + (1 - f))
double layer_speedup(double fast_fraction, double d, double k);

// One gated weight family: its dense read volume and gate statistics.
struct LayerLoad {
    double fast_fraction = 0.0;
    double volume_bytes = 0.0;  // dense (baseline) read volume
    double d = 0.0;
    double k = 0.0;
};

// Volume-weighted model-level speedup (harmonic composition of per-layer
// speedups): total dense bytes over total gated bytes.
double model_speedup(std::span<const LayerLoad> layers);

struct MapShape {
    double d_out = 0.0;
    double d_in = 0.0;
};

struct LayerShapes {
    std::vector<MapShape> maps;
};

// Expected parameters actually read per token:
//   sum over maps of d_out * (f * k + (1 - f) * d_in).
// fast_fraction must carry one entry per layer.
double effective_params(std::span<const LayerShapes> layers, std::span<const double> fast_fraction,
                        double k);

enum class RooflineRegime { BandwidthBound, ComputeBound };

const char* to_string(RooflineRegime regime);

struct RooflineTime {
    double seconds = 0.0;
    RooflineRegime regime = RooflineRegime::BandwidthBound;
    double arithmetic_intensity = 0.0;
};

// max(bytes / bandwidth, flops / compute) with the binding regime.
RooflineTime roofline_time(double bytes, double flops, const HardwareProfile& hw);

// Inputs for an end-to-end decode-step estimate. Components other than weight
// reads are given as absolute times; attention may carry an external speedup
// factor (>= 1) from a separate mechanism.
struct E2eInputs {
    std::vector<LayerLoad> weight_layers;
    double attention_seconds = 0.0;
    double vocab_seconds = 0.0;
    double norm_seconds = 0.0;
    double attention_speedup = 1.0;
};

struct CostComponent {
    std::string name;
    double baseline_seconds = 0.0;
    double accelerated_seconds = 0.0;
    double speedup = 1.0;
};

struct CostBreakdown {
    std::vector<CostComponent> components;
    double total_baseline_seconds = 0.0;
    double total_accelerated_seconds = 0.0;
    double total_speedup = 1.0;
    std::vector<std::string> footnotes;
};

CostBreakdown end_to_end_estimate(const E2eInputs& inputs, const HardwareProfile& hw);

}  // namespace gsi

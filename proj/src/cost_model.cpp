#include "gsi/cost_model.hpp"

#include <cmath>
#include <limits>

#include "gsi/error.hpp"

namespace gsi {

double HardwareProfile::crossover_intensity() const {
    if (bandwidth_bytes_per_s <= 0.0) throw ConfigError("HardwareProfile: bandwidth must be positive");
    return compute_flops_per_s / bandwidth_bytes_per_s;
}

HardwareProfile HardwareProfile::mi300x() {
    return {"MI300X", 5.3e12, 383e12, 2.0};
}

namespace {

void check_load(const LayerLoad& l) {
    if (!(l.fast_fraction >= 0.0 && l.fast_fraction <= 1.0)) {
        throw ConfigError("LayerLoad: fast_fraction must be in [0, 1]");
    }
    if (!(l.volume_bytes >= 0.0)) throw ConfigError("LayerLoad: volume must be non-negative");
    if (!(l.d > 0.0) || !(l.k > 0.0) || l.k > l.d) {
        throw ConfigError("LayerLoad: need 0 < k <= d");
    }
}

// Fraction of the dense read volume that survives gating.
double read_ratio(const LayerLoad& l) {
    return l.fast_fraction * (l.k / l.d) + (1.0 - l.fast_fraction);
}

}  // namespace

double layer_speedup(double fast_fraction, double d, double k) {
    LayerLoad l{fast_fraction, 0.0, d, k};
    check_load(l);
    // d / (f k + (1 - f) d) rather than 1 / (f k/d + 1 - f): same value, but
    // exact when f = 1 and k divides d.
    return l.d / (l.fast_fraction * l.k + (1.0 - l.fast_fraction) * l.d);
}

double model_speedup(std::span<const LayerLoad> layers) {
    if (layers.empty()) throw ConfigError("model_speedup: no layers");
    double dense = 0.0;
    double gated = 0.0;
    for (const LayerLoad& l : layers) {
        check_load(l);
        dense += l.volume_bytes;
        gated += l.volume_bytes * read_ratio(l);
    }
    if (gated <= 0.0) throw ConfigError("model_speedup: total volume must be positive");
    return dense / gated;
}

double effective_params(std::span<const LayerShapes> layers, std::span<const double> fast_fraction,
                        double k) {
    if (layers.empty()) throw ConfigError("effective_params: no layers");
    if (layers.size() != fast_fraction.size()) {
        throw ConfigError("effective_params: one fast fraction per layer required");
    }
    if (!(k > 0.0)) throw ConfigError("effective_params: k must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const double f = fast_fraction[i];
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("effective_params: fast fraction out of [0, 1]");
        for (const MapShape& m : layers[i].maps) {
            if (!(m.d_out > 0.0) || !(m.d_in > 0.0)) {
                throw ConfigError("effective_params: map shapes must be positive");
            }
            if (k > m.d_in) throw ConfigError("effective_params: k exceeds a map input dim");
            total += m.d_out * (f * k + (1.0 - f) * m.d_in);
        }
    }
    return total;
}

const char* to_string(RooflineRegime regime) {
    switch (regime) {
        case RooflineRegime::BandwidthBound: return "bandwidth_bound";
        case RooflineRegime::ComputeBound: return "compute_bound";
    }
    return "unknown";
}

RooflineTime roofline_time(double bytes, double flops, const HardwareProfile& hw) {
    if (!(bytes >= 0.0) || !(flops >= 0.0)) throw ConfigError("roofline_time: negative inputs");
    if (!(hw.bandwidth_bytes_per_s > 0.0) || !(hw.compute_flops_per_s > 0.0)) {
        throw ConfigError("roofline_time: hardware rates must be positive");
    }
    const double bound_by_bw = bytes / hw.bandwidth_bytes_per_s;
    const double bound_by_compute = flops / hw.compute_flops_per_s;
    RooflineTime out;
    out.seconds = std::max(bound_by_bw, bound_by_compute);
    out.regime = bound_by_bw > bound_by_compute ? RooflineRegime::BandwidthBound
                                                : RooflineRegime::ComputeBound;
    out.arithmetic_intensity =
        bytes > 0.0 ? flops / bytes
                    : (flops > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    return out;
}

CostBreakdown end_to_end_estimate(const E2eInputs& inputs, const HardwareProfile& hw) {
    if (inputs.weight_layers.empty()) throw ConfigError("end_to_end_estimate: no weight layers");
    if (!(inputs.attention_speedup >= 1.0)) {
        throw ConfigError("end_to_end_estimate: attention speedup must be >= 1");
    }
    if (inputs.attention_seconds < 0.0 || inputs.vocab_seconds < 0.0 || inputs.norm_seconds < 0.0) {
        throw ConfigError("end_to_end_estimate: component times must be non-negative");
    }

    double dense_bytes = 0.0;
    double gated_bytes = 0.0;
    for (const LayerLoad& l : inputs.weight_layers) {
        check_load(l);
        dense_bytes += l.volume_bytes;
        gated_bytes += l.volume_bytes * read_ratio(l);
    }

    // Weight streaming is the bandwidth-bound regime by construction: a
    // decode step reads each weight once, so flops per byte stay below the
    // crossover and time is just bytes over bandwidth.
    const double w_base = roofline_time(dense_bytes, 0.0, hw).seconds;
    const double w_fast = roofline_time(gated_bytes, 0.0, hw).seconds;

    CostBreakdown out;
    auto push = [&out](std::string name, double base, double fast) {
        out.components.push_back({std::move(name), base, fast, base > 0.0 ? base / fast : 1.0});
    };
    push("weight reads", w_base, w_fast);
    push("attention", inputs.attention_seconds, inputs.attention_seconds / inputs.attention_speedup);
    push("vocabulary head", inputs.vocab_seconds, inputs.vocab_seconds);
    push("layernorm + residual", inputs.norm_seconds, inputs.norm_seconds);

    for (const CostComponent& c : out.components) {
        out.total_baseline_seconds += c.baseline_seconds;
        out.total_accelerated_seconds += c.accelerated_seconds;
    }
    if (out.total_accelerated_seconds <= 0.0) {
        throw ConfigError("end_to_end_estimate: accelerated total must be positive");
    }
    out.total_speedup = out.total_baseline_seconds / out.total_accelerated_seconds;

    out.footnotes.push_back("weight volumes are counted at " + std::to_string(hw.element_bytes) +
                            "-byte deployed elements; supply volumes accordingly");
    out.footnotes.push_back(
        "gate basis reads (d*k per dispatch) are excluded from the speedup; at k << d they are "
        "second order");
    return out;
}

}  // namespace gsi

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsi/matrix.hpp"
#include "gsi/subspace.hpp"

namespace gsi {

// Which branch a dispatch took. Forced* are the diagnostic modes: Baseline
// always takes ForcedSlow, StaticProjection always ForcedFast.
enum class GatePath {
    Fast,
    Slow,
    ForcedFast,
    ForcedSlow,
};

const char* to_string(GatePath path);

// One record per dispatch. Byte counts are what a weight-read of this dispatch
// would stream at the simulator's 8-byte elements:
//   bytes_baseline       d * d_out * 8   (dense read)
//   bytes_fast_equivalent k * d_out * 8  (cached-image read)
//   bytes_actual         one of the above, per the taken path
//   bytes_gate_overhead  d * k * 8       (basis read for the gate; tracked
//                                         separately, excluded from speedups)
struct GateRecord {
    double rho = 0.0;
    double threshold = 0.0;
    GatePath path = GatePath::ForcedSlow;
    std::uint64_t bytes_fast_equivalent = 0;
    std::uint64_t bytes_actual = 0;
    std::uint64_t bytes_baseline = 0;
    std::uint64_t bytes_gate_overhead = 0;
};

struct ExecutionMode {
    enum class Kind { Baseline, Gated, StaticProjection };
    Kind kind = Kind::Baseline;
    double epsilon = 0.0;  // gate threshold, Gated only

    static ExecutionMode baseline() { return {Kind::Baseline, 0.0}; }
    static ExecutionMode gated(double epsilon);
    static ExecutionMode static_projection() { return {Kind::StaticProjection, 0.0}; }

    const char* name() const;
};

ExecutionMode parse_mode(const std::string& name, double epsilon);

// M = W V_k plus the identity of the weight it was cut from and the
// fingerprint of the basis it was cut against. A dispatch against a basis
// with a different fingerprint is a stale cache and is refused.
struct CachedImage {
    DenseMatrix matrix;  // d_out x k
    std::string weight_id;
    std::uint64_t basis_fingerprint = 0;
};

CachedImage cache_image(const DenseMatrix& w, const SubspaceBasis& basis, std::string weight_id);

struct GatedOutput {
    std::vector<double> y;
    GateRecord record;
};

// y = W x computed through the gate:
//   rho < epsilon  -> fast path  y = M g          (bounded error)
//   otherwise      -> slow path  y = W x          (exact)
// Baseline forces the slow path, StaticProjection forces the fast path.
// rho is computed and recorded in every mode.
GatedOutput gated_forward(std::span<const double> x, const DenseMatrix& w, const CachedImage& image,
                          const SubspaceBasis& basis, const ExecutionMode& mode);

// Largest singular value by power iteration on W^T W.
double spectral_norm(const DenseMatrix& w, double tol = 1e-10);

struct LayerStats {
    std::uint64_t total = 0;
    std::uint64_t fast = 0;
    std::uint64_t slow = 0;
    std::uint64_t forced_fast = 0;
    std::uint64_t forced_slow = 0;
    double rho_sum = 0.0;
    std::uint64_t bytes_actual = 0;
    std::uint64_t bytes_baseline = 0;
    std::uint64_t bytes_fast_equivalent = 0;
    std::uint64_t bytes_gate_overhead = 0;

    void add(const GateRecord& r);
    void merge(const LayerStats& o);

    // Fast-path fraction counts forced fast dispatches as fast.
    double fast_fraction() const;
    double mean_rho() const;
    // Realized weight-read speedup: baseline bytes over actually read bytes.
    // Gate overhead is intentionally not included.
    double weight_read_speedup() const;
};

// Aggregate a dispatch trace; empty input is an error.
LayerStats fold_gate_stats(std::span<const GateRecord> records);

}  // namespace gsi

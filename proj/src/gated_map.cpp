#include "gsi/gated_map.hpp"

#include <cmath>

#include "gsi/error.hpp"
#include "gsi/prng.hpp"

namespace gsi {

const char* to_string(GatePath path) {
    switch (path) {
        case GatePath::Fast: return "fast";
        case GatePath::Slow: return "slow";
        case GatePath::ForcedFast: return "forced_fast";
        case GatePath::ForcedSlow: return "forced_slow";
    }
    return "unknown";
}

ExecutionMode ExecutionMode::gated(double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ConfigError("ExecutionMode: gate threshold must be in (0, 1)");
    }
    return {Kind::Gated, epsilon};
}

const char* ExecutionMode::name() const {
    switch (kind) {
        case Kind::Baseline: return "baseline";
        case Kind::Gated: return "gated";
        case Kind::StaticProjection: return "static";
    }
    return "unknown";
}

ExecutionMode parse_mode(const std::string& name, double epsilon) {
    if (name == "baseline") return ExecutionMode::baseline();
    if (name == "gated") return ExecutionMode::gated(epsilon);
    if (name == "static") return ExecutionMode::static_projection();
    throw ConfigError("unknown execution mode '" + name + "' (expected baseline|gated|static)");
}

CachedImage cache_image(const DenseMatrix& w, const SubspaceBasis& basis, std::string weight_id) {
    if (w.cols() != basis.dim()) {
        throw ConfigError("cache_image: weight '" + weight_id + "' input dim " +
                          std::to_string(w.cols()) + " does not match basis dim " +
                          std::to_string(basis.dim()));
    }
    CachedImage image;
    image.matrix = matmul(w, basis.columns());
    image.weight_id = std::move(weight_id);
    image.basis_fingerprint = basis.fingerprint();
    return image;
}

GatedOutput gated_forward(std::span<const double> x, const DenseMatrix& w, const CachedImage& image,
                          const SubspaceBasis& basis, const ExecutionMode& mode) {
    if (x.size() != w.cols()) throw ConfigError("gated_forward: input length does not match weight");
    if (basis.dim() != w.cols()) throw ConfigError("gated_forward: basis dim does not match weight");
    // Staleness outranks shape: a grown or rebuilt basis changes both, and the
    // caller needs to hear "rebuild the image", not "wrong shape".
    if (image.basis_fingerprint != basis.fingerprint()) {
        throw StaleCacheError("gated_forward: cached image '" + image.weight_id +
                              "' was built against a different basis; rebuild it");
    }
    if (image.matrix.rows() != w.rows() || image.matrix.cols() != basis.rank()) {
        throw ConfigError("gated_forward: cached image shape does not match weight/basis");
    }

    const std::uint64_t d = w.cols();
    const std::uint64_t d_out = w.rows();
    const std::uint64_t k = basis.rank();

    ProjectionResult proj = project(basis, x);

    GatedOutput out;
    out.record.rho = proj.rho;
    out.record.bytes_baseline = d * d_out * sizeof(double);
    out.record.bytes_fast_equivalent = k * d_out * sizeof(double);

    switch (mode.kind) {
        case ExecutionMode::Kind::Baseline:
            out.record.path = GatePath::ForcedSlow;
            out.record.bytes_actual = out.record.bytes_baseline;
            out.record.bytes_gate_overhead = 0;  // baseline pays no gate
            out.y = matvec(w, x);
            break;
        case ExecutionMode::Kind::Gated:
            out.record.threshold = mode.epsilon;
            out.record.bytes_gate_overhead = d * k * sizeof(double);
            if (proj.rho < mode.epsilon) {
                out.record.path = GatePath::Fast;
                out.record.bytes_actual = out.record.bytes_fast_equivalent;
                out.y = matvec(image.matrix, proj.coefficients);
            } else {
                out.record.path = GatePath::Slow;
                out.record.bytes_actual = out.record.bytes_baseline;
                out.y = matvec(w, x);
            }
            break;
        case ExecutionMode::Kind::StaticProjection:
            out.record.path = GatePath::ForcedFast;
            out.record.bytes_gate_overhead = d * k * sizeof(double);
            out.record.bytes_actual = out.record.bytes_fast_equivalent;
            out.y = matvec(image.matrix, proj.coefficients);
            break;
    }
    return out;
}

double spectral_norm(const DenseMatrix& w, double tol) {
    if (w.rows() == 0 || w.cols() == 0) throw ConfigError("spectral_norm: empty matrix");
    if (frobenius_norm(w) == 0.0) return 0.0;

    Prng rng(0x9e3779b97f4a7c15ull);
    std::vector<double> v(w.cols());
    auto randomize = [&] {
        double n = 0.0;
        while (n == 0.0) {
            for (double& x : v) x = rng.gaussian();
            n = norm2(v);
        }
        for (double& x : v) x /= n;
    };
    randomize();

    double sigma = 0.0;
    for (int iter = 0; iter < 10000; ++iter) {
        std::vector<double> u = matvec(w, v);
        const double nu = norm2(u);
        if (nu == 0.0) {
            randomize();  // landed in the null space, retry
            continue;
        }
        std::vector<double> vt = matvec_transposed(w, u);
        const double nvt = norm2(vt);
        if (nvt == 0.0) {
            randomize();
            continue;
        }
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = vt[i] / nvt;
        if (iter > 0 && std::fabs(nu - sigma) <= tol * nu) return nu;
        sigma = nu;
    }
    return sigma;  // tight clusters converge slowly; the estimate is still a lower bound
}

void LayerStats::add(const GateRecord& r) {
    ++total;
    switch (r.path) {
        case GatePath::Fast: ++fast; break;
        case GatePath::Slow: ++slow; break;
        case GatePath::ForcedFast: ++forced_fast; break;
        case GatePath::ForcedSlow: ++forced_slow; break;
    }
    rho_sum += r.rho;
    bytes_actual += r.bytes_actual;
    bytes_baseline += r.bytes_baseline;
    bytes_fast_equivalent += r.bytes_fast_equivalent;
    bytes_gate_overhead += r.bytes_gate_overhead;
}

void LayerStats::merge(const LayerStats& o) {
    total += o.total;
    fast += o.fast;
    slow += o.slow;
    forced_fast += o.forced_fast;
    forced_slow += o.forced_slow;
    rho_sum += o.rho_sum;
    bytes_actual += o.bytes_actual;
    bytes_baseline += o.bytes_baseline;
    bytes_fast_equivalent += o.bytes_fast_equivalent;
    bytes_gate_overhead += o.bytes_gate_overhead;
}

double LayerStats::fast_fraction() const {
    if (total == 0) throw NumericalError("LayerStats: no dispatches recorded");
    return static_cast<double>(fast + forced_fast) / static_cast<double>(total);
}

double LayerStats::mean_rho() const {
    if (total == 0) throw NumericalError("LayerStats: no dispatches recorded");
    return rho_sum / static_cast<double>(total);
}

double LayerStats::weight_read_speedup() const {
    if (bytes_actual == 0) throw NumericalError("LayerStats: no bytes recorded");
    return static_cast<double>(bytes_baseline) / static_cast<double>(bytes_actual);
}

LayerStats fold_gate_stats(std::span<const GateRecord> records) {
    if (records.empty()) throw ConfigError("fold_gate_stats: empty record sequence");
    LayerStats s;
    for (const GateRecord& r : records) s.add(r);
    return s;
}

}  // namespace gsi

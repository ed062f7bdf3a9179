#include "gsi/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "gsi/error.hpp"

namespace gsi {

namespace {

std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
        h ^= (word >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fingerprint_columns(const DenseMatrix& cols) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = fnv1a_u64(h, cols.rows());
    h = fnv1a_u64(h, cols.cols());
    for (double v : cols.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = fnv1a_u64(h, bits);
    }
    return h;
}

double column_dot(const DenseMatrix& a, std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += a.at(r, p) * a.at(r, q);
    return s;
}

void rotate_columns(DenseMatrix& a, std::size_t p, std::size_t q, double c, double s) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double ap = a.at(r, p);
        const double aq = a.at(r, q);
        a.at(r, p) = c * ap - s * aq;
        a.at(r, q) = s * ap + c * aq;
    }
}

// Orthogonalize a canonical unit vector against columns [0, j) twice and
// normalize into column j. Seeding at the row with the least mass in the
// existing columns guarantees a residual norm of at least sqrt((m - j) / m).
void complete_column(DenseMatrix& u, std::size_t j) {
    const std::size_t m = u.rows();
    std::size_t seed = 0;
    double least = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
        double mass = 0.0;
        for (std::size_t c = 0; c < j; ++c) mass += u.at(r, c) * u.at(r, c);
        if (mass < least) {
            least = mass;
            seed = r;
        }
    }
    std::vector<double> cand(m, 0.0);
    cand[seed] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < j; ++c) {
            double proj = 0.0;
            for (std::size_t r = 0; r < m; ++r) proj += u.at(r, c) * cand[r];
            for (std::size_t r = 0; r < m; ++r) cand[r] -= proj * u.at(r, c);
        }
    }
    const double n = norm2(cand);
    if (!(n > 1e-8)) throw NumericalError("thin_svd: failed to complete an orthonormal column");
    for (std::size_t r = 0; r < m; ++r) u.at(r, j) = cand[r] / n;
}

}  // namespace

const char* to_string(BasisOrigin origin) {
    switch (origin) {
        case BasisOrigin::Calibrated: return "calibrated";
        case BasisOrigin::Inherited: return "inherited";
        case BasisOrigin::Streamed: return "streamed";
    }
    return "unknown";
}

SubspaceBasis::SubspaceBasis(DenseMatrix columns, BasisOrigin origin, bool)
    : columns_(std::move(columns)), origin_(origin), fingerprint_(fingerprint_columns(columns_)) {}

SubspaceBasis SubspaceBasis::from_columns(DenseMatrix columns, BasisOrigin origin) {
    if (columns.rows() == 0 || columns.cols() == 0) {
        throw ConfigError("SubspaceBasis: empty column matrix");
    }
    if (columns.cols() > columns.rows()) {
        throw ConfigError("SubspaceBasis: rank exceeds ambient dimension");
    }
    SubspaceBasis b(std::move(columns), origin, true);
    const double defect = b.orthonormality_defect();
    if (!(defect <= 1e-8)) {
        throw NumericalError("SubspaceBasis: columns are not orthonormal (defect " +
                             std::to_string(defect) + ")");
    }
    return b;
}

SubspaceBasis SubspaceBasis::truncated(std::size_t k) const {
    if (k < 1 || k > rank()) throw ConfigError("SubspaceBasis::truncated: k out of range");
    DenseMatrix cols(dim(), k);
    for (std::size_t r = 0; r < dim(); ++r) {
        for (std::size_t c = 0; c < k; ++c) cols.at(r, c) = columns_.at(r, c);
    }
    return SubspaceBasis(std::move(cols), origin_, true);
}

SubspaceBasis SubspaceBasis::with_origin(BasisOrigin origin) const {
    SubspaceBasis b = *this;
    b.origin_ = origin;
    return b;
}

double SubspaceBasis::orthonormality_defect() const {
    const std::size_t k = rank();
    double defect = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            const double g = column_dot(columns_, i, j);
            const double target = (i == j) ? 1.0 : 0.0;
            defect = std::max(defect, std::fabs(g - target));
        }
    }
    return defect;
}

ThinSvd thin_svd(const DenseMatrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw ConfigError("thin_svd: empty matrix");
    if (!x.all_finite()) throw NumericalError("thin_svd: input has non-finite entries");

    const bool flipped = x.rows() < x.cols();
    DenseMatrix a = flipped ? transposed(x) : x;
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    DenseMatrix v = DenseMatrix::identity(n);

    // One-sided Jacobi: rotate column pairs of A until all pairwise inner
    // products are negligible relative to the column norms. The tolerance
    // tracks the rounding-error floor of a length-m dot product; anything
    // tighter can never settle. Columns whose mass has collapsed to roundoff
    // relative to the largest input column are deflated out of the sweep:
    // they land under the rank cutoff below regardless, and rotating two of
    // them against each other is identity-like churn that can cycle forever
    // once their products reach the denormal range.
    const int kMaxSweeps = 60;
    const double eps = std::numeric_limits<double>::epsilon();
    const double kTol = 4.0 * eps * static_cast<double>(m);
    double max_mass = 0.0;
    for (std::size_t j = 0; j < n; ++j) max_mass = std::max(max_mass, column_dot(a, j, j));
    const double deflate = max_mass * eps * eps;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = column_dot(a, p, p);
                const double beta = column_dot(a, q, q);
                if (alpha <= deflate || beta <= deflate) continue;
                const double gamma = column_dot(a, p, q);
                if (std::fabs(gamma) <= kTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_columns(a, p, q, c, s);
                rotate_columns(v, p, q, c, s);
            }
        }
    }
    if (!converged) {
        throw NumericalError("thin_svd: Jacobi sweeps did not converge within 60 passes");
    }

    // Column norms are the singular values; sort descending with a stable
    // index permutation so ties keep a deterministic order.
    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(column_dot(a, j, j));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    ThinSvd out;
    out.s.values.resize(n);
    out.u = DenseMatrix(m, n);
    DenseMatrix vperm(n, n);
    const double sigma_max = sigma[order[0]];
    const double cutoff = sigma_max * 1e-13;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.s.values[j] = sigma[src];
        for (std::size_t r = 0; r < n; ++r) vperm.at(r, j) = v.at(r, src);
        if (sigma[src] > cutoff && sigma[src] > 0.0) {
            for (std::size_t r = 0; r < m; ++r) out.u.at(r, j) = a.at(r, src) / sigma[src];
        } else {
            complete_column(out.u, j);
        }
    }
    out.v = std::move(vperm);

    if (flipped) std::swap(out.u, out.v);

    // Sign convention: first nonzero component of each right singular vector
    // is positive; the matching left vector flips with it.
    for (std::size_t j = 0; j < out.v.cols(); ++j) {
        double lead = 0.0;
        for (std::size_t r = 0; r < out.v.rows(); ++r) {
            if (out.v.at(r, j) != 0.0) {
                lead = out.v.at(r, j);
                break;
            }
        }
        if (lead < 0.0) {
            for (std::size_t r = 0; r < out.v.rows(); ++r) out.v.at(r, j) = -out.v.at(r, j);
            for (std::size_t r = 0; r < out.u.rows(); ++r) out.u.at(r, j) = -out.u.at(r, j);
        }
    }
    return out;
}

double effective_rank(const SingularSpectrum& s) {
    if (s.values.empty()) throw NumericalError("effective_rank: empty spectrum");
    double sum = 0.0;
    for (double v : s.values) {
        if (v < 0.0 || !std::isfinite(v)) throw NumericalError("effective_rank: invalid singular value");
        sum += v;
    }
    if (sum <= 0.0) throw NumericalError("effective_rank: all-zero spectrum");
    double entropy = 0.0;
    for (double v : s.values) {
        if (v <= 0.0) continue;
        const double p = v / sum;
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

SubspaceBasis build_basis(const DenseMatrix& x, std::size_t k) {
    const std::size_t limit = std::min(x.rows(), x.cols());
    if (k < 1 || k > limit) {
        throw ConfigError("build_basis: k must be in [1, min(rows, cols)], got " + std::to_string(k));
    }
    ThinSvd svd = thin_svd(x);
    DenseMatrix cols(x.cols(), k);
    for (std::size_t r = 0; r < x.cols(); ++r) {
        for (std::size_t c = 0; c < k; ++c) cols.at(r, c) = svd.v.at(r, c);
    }
    return SubspaceBasis::from_columns(std::move(cols), BasisOrigin::Calibrated);
}

ProjectionResult project(const SubspaceBasis& basis, std::span<const double> x) {
    if (x.size() != basis.dim()) throw ConfigError("project: vector length does not match basis dim");
    ProjectionResult out;
    out.coefficients = matvec_transposed(basis.columns(), x);
    std::vector<double> back = matvec(basis.columns(), out.coefficients);
    out.residual.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.residual[i] = x[i] - back[i];
    const double nx = norm2(x);
    out.rho = (nx > 0.0) ? norm2(out.residual) / nx : 0.0;
    return out;
}

InsertResult dgks_insert(const SubspaceBasis& basis, std::span<const double> x, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("dgks_insert: eta must be in (0, 1)");
    if (x.size() != basis.dim()) throw ConfigError("dgks_insert: vector length does not match basis dim");
    if (basis.rank() == basis.dim()) return {basis, false};

    ProjectionResult proj = project(basis, x);
    if (!(proj.rho > eta)) return {basis, false};

    // Two orthogonalization passes (classical Gram-Schmidt plus one
    // corrective pass) keep the defect at machine precision even after
    // thousands of insertions.
    std::vector<double> y = proj.residual;
    const std::vector<double> g2 = matvec_transposed(basis.columns(), y);
    const std::vector<double> back = matvec(basis.columns(), g2);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= back[i];

    const double n = norm2(y);
    if (n < 1e-12) return {basis, false};

    DenseMatrix cols(basis.dim(), basis.rank() + 1);
    for (std::size_t r = 0; r < basis.dim(); ++r) {
        for (std::size_t c = 0; c < basis.rank(); ++c) cols.at(r, c) = basis.columns().at(r, c);
        cols.at(r, basis.rank()) = y[r] / n;
    }
    return {SubspaceBasis(std::move(cols), BasisOrigin::Streamed, true), true};
}

std::vector<double> principal_angle_cosines(const SubspaceBasis& a, const SubspaceBasis& b) {
    if (a.dim() != b.dim()) throw ConfigError("principal_angle_cosines: ambient dimensions differ");
    const DenseMatrix g = matmul_at_b(a.columns(), b.columns());
    ThinSvd svd = thin_svd(g);
    std::vector<double> cosines = svd.s.values;
    for (double& c : cosines) c = std::clamp(c, 0.0, 1.0);
    return cosines;
}

}  // namespace gsi

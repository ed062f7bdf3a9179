#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsi/matrix.hpp"

namespace gsi {

// Non-increasing, non-negative singular values.
struct SingularSpectrum {
    std::vector<double> values;
};

// How a basis came to exist. Streamed marks any basis touched by an online
// insertion, regardless of how it started.
enum class BasisOrigin {
    Calibrated,
    Inherited,
    Streamed,
};

const char* to_string(BasisOrigin origin);

class SubspaceBasis;
struct InsertResult;
InsertResult dgks_insert(const SubspaceBasis& basis, std::span<const double> x, double eta);

// Column-orthonormal d x k matrix plus provenance. The fingerprint hashes the
// column data and is the staleness token for cached weight images: any change
// to the columns changes the fingerprint.
class SubspaceBasis {
public:
    SubspaceBasis() = default;

    // Validates orthonormality (defect <= 1e-8) before accepting the columns.
    static SubspaceBasis from_columns(DenseMatrix columns, BasisOrigin origin);

    std::size_t dim() const { return columns_.rows(); }
    std::size_t rank() const { return columns_.cols(); }
    const DenseMatrix& columns() const { return columns_; }
    BasisOrigin origin() const { return origin_; }
    std::uint64_t fingerprint() const { return fingerprint_; }

    // First k columns as a new basis; k must be in [1, rank].
    SubspaceBasis truncated(std::size_t k) const;

    // Relabel provenance without touching the columns (fingerprint unchanged).
    SubspaceBasis with_origin(BasisOrigin origin) const;

    // max |V^T V - I| over all entries.
    double orthonormality_defect() const;

private:
    friend struct InsertResult;
    friend InsertResult dgks_insert(const SubspaceBasis&, std::span<const double>, double);

    SubspaceBasis(DenseMatrix columns, BasisOrigin origin, bool);  // unchecked

    DenseMatrix columns_;
    BasisOrigin origin_ = BasisOrigin::Calibrated;
    std::uint64_t fingerprint_ = 0;
};

// Exact split of x into in-span and out-of-span parts:
//   x = V g + r,  g = V^T x,  r perpendicular to span(V).
struct ProjectionResult {
    std::vector<double> coefficients;  // g, length rank
    std::vector<double> residual;      // r, length dim
    double rho = 0.0;                  // ||r|| / ||x||, 0 when ||x|| = 0
};

struct ThinSvd {
    DenseMatrix u;       // m x p, column-orthonormal, p = min(m, n)
    SingularSpectrum s;  // p values, non-increasing
    DenseMatrix v;       // n x p, column-orthonormal
};

// Thin SVD by one-sided Jacobi rotations. Deterministic: fixed sweep order,
// fixed sign convention (first nonzero component of each right singular
// vector is positive). Inputs with more columns than rows are handled by
// transposing. Throws NumericalError on non-finite entries or if the sweep
// cap is hit.
ThinSvd thin_svd(const DenseMatrix& x);

// exp of the Shannon entropy of the normalized spectrum. Requires at least
// one strictly positive value. A zero value contributes nothing (p log p -> 0).
double effective_rank(const SingularSpectrum& s);

// Top-k right singular vectors of the row-sample matrix x (rows are samples).
SubspaceBasis build_basis(const DenseMatrix& x, std::size_t k);

// Decompose x against the basis; see ProjectionResult.
ProjectionResult project(const SubspaceBasis& basis, std::span<const double> x);

struct InsertResult {
    SubspaceBasis basis;
    bool accepted = false;
};

// Streamed rank-1 basis update. Inserts x's normalized out-of-span direction
// when rho(x) > eta; the candidate is orthogonalized twice against the basis
// before insertion and rejected as numerically dependent if its norm falls
// below 1e-12. A full-rank basis (rank == dim) always rejects.
InsertResult dgks_insert(const SubspaceBasis& basis, std::span<const double> x, double eta);

// Cosines of the principal angles between the two spans, non-increasing,
// clipped to [0, 1]. Lengths = min(rank_a, rank_b). Dims must match.
std::vector<double> principal_angle_cosines(const SubspaceBasis& a, const SubspaceBasis& b);

}  // namespace gsi

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gsi {

// Row-major dense matrix of doubles. Deliberately minimal: the project only
// needs matvec, matmul, transposes and norms, all with a deterministic
// accumulation order.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// y = A x; x.size() must equal A.cols().
std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);

// y = A^T x; x.size() must equal A.rows().
std::vector<double> matvec_transposed(const DenseMatrix& a, std::span<const double> x);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// A^T B without materializing the transpose.
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transposed(const DenseMatrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius_norm(const DenseMatrix& a);

// max |a_ij - b_ij|; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace gsi

#pragma once

#include <cstddef>
#include <vector>

namespace trackcast::linalg {

// Row-major dense matrix. Substrate for the Kalman filter and the DPP
// numerics; deliberately loop-based so summation order is fixed.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Mat identity(std::size_t n);
};

Mat mul(const Mat& a, const Mat& b);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
double trace(const Mat& a);

// Solves A x = b by LU with partial pivoting. Throws NumericalError when the
// pivot collapses (singular within eps).
std::vector<double> lu_solve(Mat a, std::vector<double> b, double eps = 1e-12);

// Inverse via the same pivoted factorization, one solve per basis vector.
Mat lu_inverse(const Mat& a, double eps = 1e-12);

// Cholesky factor L (lower) of a symmetric positive definite matrix.
// Returns false when a non-positive pivot is hit.
bool cholesky(const Mat& a, Mat& l_out);

// log det of a symmetric positive definite matrix via Cholesky.
// Throws NumericalError when the matrix is not positive definite.
double logdet_spd(const Mat& a);

// Determinant by cofactor expansion along the first row. Exponential cost;
// this is the brute-force oracle used in tests, kept here so both the library
// checks and the test suites share one definition.
double det_cofactor(const Mat& a);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
std::vector<double> symmetric_eigenvalues(Mat a, int max_sweeps = 64);

}  // namespace trackcast::linalg

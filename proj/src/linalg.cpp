#include "trackcast/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trackcast/errors.hpp"

namespace trackcast::linalg {

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat mul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows)
        throw ShapeError("mat mul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Mat add(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("mat add: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Mat sub(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("mat sub: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

double trace(const Mat& a) {
    double s = 0.0;
    const std::size_t n = std::min(a.rows, a.cols);
    for (std::size_t i = 0; i < n; ++i) s += a(i, i);
    return s;
}

namespace {

// In-place LU with partial pivoting; perm records row swaps.
void lu_factor(Mat& a, std::vector<std::size_t>& perm, double eps) {
    const std::size_t n = a.rows;
    if (a.cols != n) throw ShapeError("lu_factor: matrix not square");
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(a(k, k));
        for (std::size_t r = k + 1; r < n; ++r) {
            const double v = std::fabs(a(r, k));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < eps) throw NumericalError("lu_factor: singular pivot at column " + std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            a(r, k) /= a(k, k);
            const double f = a(r, k);
            for (std::size_t j = k + 1; j < n; ++j) a(r, j) -= f * a(k, j);
        }
    }
}

std::vector<double> lu_apply(const Mat& lu, const std::vector<std::size_t>& perm,
                             const std::vector<double>& b) {
    const std::size_t n = lu.rows;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= lu(ii, j) * x[j];
        x[ii] /= lu(ii, ii);
    }
    return x;
}

}  // namespace

std::vector<double> lu_solve(Mat a, std::vector<double> b, double eps) {
    if (b.size() != a.rows) throw ShapeError("lu_solve: rhs length mismatch");
    std::vector<std::size_t> perm;
    lu_factor(a, perm, eps);
    return lu_apply(a, perm, b);
}

Mat lu_inverse(const Mat& a, double eps) {
    const std::size_t n = a.rows;
    Mat lu = a;
    std::vector<std::size_t> perm;
    lu_factor(lu, perm, eps);
    Mat inv(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const std::vector<double> col = lu_apply(lu, perm, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
        e[j] = 0.0;
    }
    return inv;
}

bool cholesky(const Mat& a, Mat& l_out) {
    const std::size_t n = a.rows;
    if (a.cols != n) throw ShapeError("cholesky: matrix not square");
    l_out = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l_out(i, k) * l_out(j, k);
            if (i == j) {
                if (s <= 0.0) return false;
                l_out(i, i) = std::sqrt(s);
            } else {
                l_out(i, j) = s / l_out(j, j);
            }
        }
    }
    return true;
}

double logdet_spd(const Mat& a) {
    Mat l;
    if (!cholesky(a, l)) throw NumericalError("logdet_spd: matrix not positive definite");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

double det_cofactor(const Mat& a) {
    const std::size_t n = a.rows;
    if (a.cols != n) throw ShapeError("det_cofactor: matrix not square");
    if (n == 0) return 1.0;
    if (n == 1) return a(0, 0);
    double det = 0.0;
    double sign = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        Mat minor(n - 1, n - 1);
        for (std::size_t r = 1; r < n; ++r) {
            std::size_t cc = 0;
            for (std::size_t c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = a(r, c);
            }
        }
        det += sign * a(0, j) * det_cofactor(minor);
        sign = -sign;
    }
    return det;
}

std::vector<double> symmetric_eigenvalues(Mat a, int max_sweeps) {
    const std::size_t n = a.rows;
    if (a.cols != n) throw ShapeError("symmetric_eigenvalues: matrix not square");
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

}  // namespace trackcast::linalg

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "pnpista/errors.hpp"

namespace pnpista {

/// Dense row-major matrix of doubles. Analysis-scale only; the library
/// caps materializations at kDenseCap rows.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw Error("DenseMatrix: negative dimensions");
    }

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n, 0.0);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* row(int i) { return a_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return a_.data() + static_cast<std::size_t>(i) * cols_; }

    const std::vector<double>& values() const { return a_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

inline constexpr int kDenseCap = 4096;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double norm2_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline std::vector<double> matvec(const DenseMatrix& A, const std::vector<double>& x) {
    if (A.cols() != static_cast<int>(x.size()))
        throw DimensionError("matvec: dimension mismatch");
    std::vector<double> y(static_cast<std::size_t>(A.rows()), 0.0);
    for (int i = 0; i < A.rows(); ++i) {
        const double* row = A.row(i);
        double s = 0.0;
        for (int j = 0; j < A.cols(); ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline DenseMatrix transpose(const DenseMatrix& A) {
    DenseMatrix T(A.cols(), A.rows());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
    return T;
}

inline DenseMatrix matmul(const DenseMatrix& A, const DenseMatrix& B) {
    if (A.cols() != B.rows()) throw DimensionError("matmul: dimension mismatch");
    DenseMatrix C(A.rows(), B.cols(), 0.0);
    for (int i = 0; i < A.rows(); ++i) {
        double* ci = C.row(i);
        for (int k = 0; k < A.cols(); ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            const double* bk = B.row(k);
            for (int j = 0; j < B.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return C;
}

inline double max_abs_diff(const DenseMatrix& A, const DenseMatrix& B) {
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw DimensionError("max_abs_diff: dimension mismatch");
    double m = 0.0;
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) m = std::max(m, std::abs(A(i, j) - B(i, j)));
    return m;
}

/// Solve A x = b by LU factorization with partial pivoting.
inline std::vector<double> lu_solve(DenseMatrix A, std::vector<double> b) {
    const int n = A.rows();
    if (A.cols() != n || static_cast<int>(b.size()) != n)
        throw DimensionError("lu_solve: dimension mismatch");
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(A(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = std::abs(A(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best < 1e-300) throw Error("lu_solve: matrix is numerically singular");
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(A(k, j), A(piv, j));
            std::swap(b[k], b[piv]);
        }
        const double inv = 1.0 / A(k, k);
        for (int i = k + 1; i < n; ++i) {
            const double f = A(i, k) * inv;
            if (f == 0.0) continue;
            A(i, k) = f;
            for (int j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
            b[i] -= f * b[k];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= A(i, j) * b[j];
        b[i] = s / A(i, i);
    }
    return b;
}

/*
 * Eigenvalues of a real general matrix: Householder reduction to upper
 * Hessenberg form followed by Francis double-shift QR, in the classic
 * EISPACK/JAMA lineage (ORTHES + HQR, eigenvalues only). Complex pairs
 * come out conjugated. Throws if the QR iteration has not deflated every
 * eigenvalue within iter_cap_factor * n sweeps.
 */
inline std::vector<std::complex<double>> eigenvalues(DenseMatrix H, int iter_cap_factor = 100) {
    const int nn = H.rows();
    if (H.cols() != nn) throw DimensionError("eigenvalues: matrix must be square");
    if (nn == 0) return {};

    const int low = 0;
    const int high = nn - 1;

    // Householder reduction to Hessenberg form.
    {
        std::vector<double> ort(static_cast<std::size_t>(nn), 0.0);
        for (int m = low + 1; m <= high - 1; ++m) {
            double scale = 0.0;
            for (int i = m; i <= high; ++i) scale += std::abs(H(i, m - 1));
            if (scale == 0.0) continue;

            double h = 0.0;
            for (int i = high; i >= m; --i) {
                ort[i] = H(i, m - 1) / scale;
                h += ort[i] * ort[i];
            }
            double g = std::sqrt(h);
            if (ort[m] > 0) g = -g;
            h -= ort[m] * g;
            ort[m] -= g;

            // Apply the similarity transform (I - u u^T / h) H (I - u u^T / h).
            for (int j = m; j < nn; ++j) {
                double f = 0.0;
                for (int i = high; i >= m; --i) f += ort[i] * H(i, j);
                f /= h;
                for (int i = m; i <= high; ++i) H(i, j) -= f * ort[i];
            }
            for (int i = 0; i <= high; ++i) {
                double f = 0.0;
                for (int j = high; j >= m; --j) f += ort[j] * H(i, j);
                f /= h;
                for (int j = m; j <= high; ++j) H(i, j) -= f * ort[j];
            }
            H(m, m - 1) = scale * g;
        }
        // The reduction leaves multipliers under the subdiagonal; clear them.
        for (int i = 2; i < nn; ++i)
            for (int j = 0; j <= i - 2; ++j) H(i, j) = 0.0;
    }

    std::vector<double> d(static_cast<std::size_t>(nn), 0.0);
    std::vector<double> e(static_cast<std::size_t>(nn), 0.0);

    const double eps = std::ldexp(1.0, -52);
    double exshift = 0.0;
    double p = 0, q = 0, r = 0, s = 0, z = 0, w, x, y;

    double norm = 0.0;
    for (int i = 0; i < nn; ++i)
        for (int j = std::max(i - 1, 0); j < nn; ++j) norm += std::abs(H(i, j));

    int n = high;
    int iter = 0;
    long total = 0;
    const long cap = static_cast<long>(iter_cap_factor) * nn;
    while (n >= low) {
        // Find a negligible subdiagonal element.
        int l = n;
        while (l > low) {
            s = std::abs(H(l - 1, l - 1)) + std::abs(H(l, l));
            if (s == 0.0) s = norm;
            if (std::abs(H(l, l - 1)) <= eps * s) break;
            --l;
        }

        if (l == n) {
            // One real root.
            H(n, n) += exshift;
            d[n] = H(n, n);
            e[n] = 0.0;
            --n;
            iter = 0;
        } else if (l == n - 1) {
            // A 2x2 block: real pair or complex conjugate pair.
            w = H(n, n - 1) * H(n - 1, n);
            p = (H(n - 1, n - 1) - H(n, n)) / 2.0;
            q = p * p + w;
            z = std::sqrt(std::abs(q));
            H(n, n) += exshift;
            H(n - 1, n - 1) += exshift;
            x = H(n, n);
            if (q >= 0) {
                z = (p >= 0) ? p + z : p - z;
                d[n - 1] = x + z;
                d[n] = d[n - 1];
                if (z != 0.0) d[n] = x - w / z;
                e[n - 1] = 0.0;
                e[n] = 0.0;
            } else {
                d[n - 1] = x + p;
                d[n] = x + p;
                e[n - 1] = z;
                e[n] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // Form the implicit double shift.
            x = H(n, n);
            y = 0.0;
            w = 0.0;
            if (l < n) {
                y = H(n - 1, n - 1);
                w = H(n, n - 1) * H(n - 1, n);
            }

            // Exceptional shifts to break limit cycles.
            if (iter == 10 || iter == 20) {
                exshift += x;
                for (int i = low; i <= n; ++i) H(i, i) -= x;
                s = std::abs(H(n, n - 1)) + std::abs(H(n - 1, n - 2));
                x = y = 0.75 * s;
                w = -0.4375 * s * s;
            }
            if (iter == 30) {
                s = (y - x) / 2.0;
                s = s * s + w;
                if (s > 0) {
                    s = std::sqrt(s);
                    if (y < x) s = -s;
                    s = x - w / ((y - x) / 2.0 + s);
                    for (int i = low; i <= n; ++i) H(i, i) -= s;
                    exshift += s;
                    x = y = w = 0.964;
                }
            }

            ++iter;
            if (++total > cap)
                throw Error("eigenvalues: QR iteration did not converge within " +
                            std::to_string(cap) + " sweeps");

            // Look for two consecutive small subdiagonal elements.
            int m = n - 2;
            while (m >= l) {
                z = H(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / H(m + 1, m) + H(m, m + 1);
                q = H(m + 1, m + 1) - z - r - s;
                r = H(m + 2, m + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l) break;
                if (std::abs(H(m, m - 1)) * (std::abs(q) + std::abs(r)) <
                    eps * (std::abs(p) *
                           (std::abs(H(m - 1, m - 1)) + std::abs(z) + std::abs(H(m + 1, m + 1)))))
                    break;
                --m;
            }
            for (int i = m + 2; i <= n; ++i) {
                H(i, i - 2) = 0.0;
                if (i > m + 2) H(i, i - 3) = 0.0;
            }

            // Double QR sweep on rows l..n, columns m..n.
            for (int k = m; k <= n - 1; ++k) {
                const bool notlast = (k != n - 1);
                if (k != m) {
                    p = H(k, k - 1);
                    q = H(k + 1, k - 1);
                    r = notlast ? H(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x == 0.0) continue;
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = std::sqrt(p * p + q * q + r * r);
                if (p < 0) s = -s;
                if (s == 0.0) continue;

                if (k != m)
                    H(k, k - 1) = -s * x;
                else if (l != m)
                    H(k, k - 1) = -H(k, k - 1);
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for (int j = k; j <= n; ++j) {
                    p = H(k, j) + q * H(k + 1, j);
                    if (notlast) {
                        p += r * H(k + 2, j);
                        H(k + 2, j) -= p * z;
                    }
                    H(k, j) -= p * x;
                    H(k + 1, j) -= p * y;
                }
                for (int i = l; i <= std::min(n, k + 3); ++i) {
                    p = x * H(i, k) + y * H(i, k + 1);
                    if (notlast) {
                        p += z * H(i, k + 2);
                        H(i, k + 2) -= p * r;
                    }
                    H(i, k) -= p;
                    H(i, k + 1) -= p * q;
                }
            }
        }
    }

    std::vector<std::complex<double>> eig(static_cast<std::size_t>(nn));
    for (int i = 0; i < nn; ++i) eig[i] = {d[i], e[i]};
    return eig;
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// power iteration with Rayleigh-quotient stall detection.
template <class ApplyFn>
double spd_largest_eigenvalue(int n, ApplyFn&& apply, double rel_tol = 1e-12,
                              int max_iters = 200000) {
    if (n <= 0) throw Error("spd_largest_eigenvalue: empty operator");
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = u(rng);
    double nx = norm2(x);
    for (auto& v : x) v /= nx;

    double lambda = 0.0;
    int stall = 0;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> y = apply(x);
        if (y.size() != x.size())
            throw DimensionError("spd_largest_eigenvalue: operator changed dimension");
        const double rq = dot(x, y);
        const double ny = norm2(y);
        if (ny == 0.0) return 0.0; // x fell in the null space of a PSD operator
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] / ny;
        if (it > 4 && std::abs(rq - lambda) <= rel_tol * std::max(1.0, std::abs(rq)))
            ++stall;
        else
            stall = 0;
        lambda = rq;
        if (stall >= 3) return lambda;
    }
    throw Error("spd_largest_eigenvalue: power iteration hit the iteration cap");
}

} // namespace pnpista

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "pnpista/errors.hpp"
#include "pnpista/forward_model.hpp"
#include "pnpista/linalg.hpp"
#include "pnpista/nlm.hpp"
#include "pnpista/parallel.hpp"

namespace pnpista {

/*
 * Convergence analysis of the affine PnP iteration
 *
 *     x_{k+1} = P x_k + q,   P = W (I - γ AᵀA),   q = γ W Aᵀ y.
 *
 * The certificate machinery checks three conditions on (W, A) — positive
 * weights exactly on the windows, nonnegative forward matrix, and per-row
 * dominance of the in-window mass of Q = W AᵀA — and then locates the
 * Gershgorin disks of P inside the unit disk for a range of step sizes.
 */

struct AssumptionRow {
    double inside_sum = 0.0;  // Σ_{j in Ω_i} Q_ij
    double outside_sum = 0.0; // Σ_{j not in Ω_i} Q_ij
    bool ok = false;          // outside < inside, strictly
};

struct AssumptionReport {
    bool support_ok = false;        // W_ij > 0 exactly for j in Ω_i
    bool forward_nonneg_ok = false; // min entry of A >= 0
    std::vector<AssumptionRow> dominance_rows;
    bool dominance_ok = false;
    double min_margin = 0.0; // min over rows of inside - outside
    bool overall = false;
};

struct GershgorinRow {
    double center = 0.0; // P_ii
    double radius = 0.0; // Σ_{j≠i} |P_ij|
};

struct GershgorinReport {
    std::vector<GershgorinRow> rows;
    double max_right = 0.0; // max_i (P_ii + R_i)
    double min_left = 0.0;  // min_i (P_ii - R_i)
    bool certified = false; // max_right < 1 and min_left > -1
};

struct ConvergenceReport {
    double gamma_tested = 0.0;
    double rho = 0.0;
    GershgorinReport gershgorin;
    AssumptionReport assumptions;
    std::optional<double> certified_gamma; // step-size bound from the disk certificate
};

/// Per-row diagnostics of how the disk edges move with the step size.
/// Below the per-row threshold beta (where some in-window entry of P
/// would change sign), P_ii + R_i is an affine function of γ with slope
/// outside_sum - inside_sum, and at γ = 0 the gap R_i - P_ii equals
/// 1 - 2 W_ii.
struct DiskAffineRow {
    double beta = std::numeric_limits<double>::infinity();
    double gap_at_zero = 0.0;     // R_i - P_ii at γ = 0
    double expected_gap = 0.0;    // 1 - 2 W_ii
    double max_affine_error = 0.0;
    double slope_measured = std::numeric_limits<double>::quiet_NaN();
    double slope_expected = 0.0;  // outside_sum - inside_sum
    int valid_grid_points = 0;
};

namespace detail {

inline void check_analysis_dims(const DenoiserMatrix& W, const LinearOperator& op, int cap) {
    if (W.size() != op.input_dim())
        throw DimensionError("analysis: denoiser size does not match operator input");
    if (W.size() > cap)
        throw Error("analysis refused: n = " + std::to_string(W.size()) + " exceeds cap " +
                    std::to_string(cap));
}

// Dense row i of Q = W AᵀA accumulated from the sparse denoiser row.
inline void accumulate_q_row(const DenoiserMatrix& W, const DenseMatrix& G, int i,
                             std::vector<double>& q_row) {
    const int n = W.size();
    std::fill(q_row.begin(), q_row.end(), 0.0);
    const auto cols = W.window(i);
    const auto wts = W.row_weights(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const double w = wts[k];
        const double* grow = G.row(static_cast<int>(cols[k]));
        for (int j = 0; j < n; ++j) q_row[j] += w * grow[j];
    }
}

} // namespace detail

/// P = W (I - γ AᵀA) from a precomputed dense Gram matrix.
inline DenseMatrix iteration_matrix_with_gram(const DenoiserMatrix& W, const DenseMatrix& G,
                                              double gamma) {
    const int n = W.size();
    if (G.rows() != n || G.cols() != n)
        throw DimensionError("iteration_matrix_with_gram: Gram size mismatch");
    DenseMatrix P(n, n, 0.0);
    detail::parallel_for(0, n, [&](int i) {
        double* prow = P.row(i);
        const auto cols = W.window(i);
        const auto wts = W.row_weights(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const double w = wts[k];
            const int col = static_cast<int>(cols[k]);
            prow[col] += w;
            if (gamma != 0.0) {
                const double* grow = G.row(col);
                const double f = gamma * w;
                for (int j = 0; j < n; ++j) prow[j] -= f * grow[j];
            }
        }
    });
    return P;
}

inline DenseMatrix iteration_matrix(const DenoiserMatrix& W, const LinearOperator& op,
                                    double gamma, int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    return iteration_matrix_with_gram(W, op.dense_gram(cap), gamma);
}

/// Q = W AᵀA, the γ-independent part of P = W - γQ.
inline DenseMatrix weighted_gram_matrix(const DenoiserMatrix& W, const LinearOperator& op,
                                        int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    const DenseMatrix G = op.dense_gram(cap);
    const int n = W.size();
    DenseMatrix Q(n, n, 0.0);
    detail::parallel_for(0, n, [&](int i) {
        std::vector<double> q_row(static_cast<std::size_t>(n));
        detail::accumulate_q_row(W, G, i, q_row);
        double* out = Q.row(i);
        std::copy(q_row.begin(), q_row.end(), out);
    });
    return Q;
}

/// q = γ W Aᵀ y, computed along the dense route (materialized A and W) so
/// it can serve as an oracle against the operator-form step.
inline std::vector<double> iteration_offset(const DenoiserMatrix& W, const LinearOperator& op,
                                            double gamma, const std::vector<double>& y,
                                            int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    if (static_cast<int>(y.size()) != op.output_dim())
        throw DimensionError("iteration_offset: observation length mismatch");
    const DenseMatrix A = op.dense_matrix(cap);
    std::vector<double> aty(static_cast<std::size_t>(op.input_dim()), 0.0);
    for (int i = 0; i < A.rows(); ++i) {
        const double* row = A.row(i);
        const double zi = y[i];
        if (zi == 0.0) continue;
        for (int j = 0; j < A.cols(); ++j) aty[j] += row[j] * zi;
    }
    std::vector<double> q = matvec(W.dense(cap), aty);
    for (auto& v : q) v *= gamma;
    return q;
}

/// Verify the three certificate preconditions on a concrete (W, A) pair.
/// The dominance sums are accumulated separately for in-window and
/// out-of-window columns, so an exact zero outside mass is reported as
/// exactly zero.
inline AssumptionReport check_assumptions(const DenoiserMatrix& W, const LinearOperator& op,
                                          int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    const int n = W.size();
    AssumptionReport rep;

    rep.support_ok = true;
    for (int i = 0; i < n && rep.support_ok; ++i) {
        const auto wts = W.row_weights(i);
        for (double w : wts)
            if (!(w > 0.0)) {
                rep.support_ok = false;
                break;
            }
    }

    const DenseMatrix A = op.dense_matrix(cap);
    rep.forward_nonneg_ok = true;
    for (int i = 0; i < A.rows() && rep.forward_nonneg_ok; ++i) {
        const double* row = A.row(i);
        for (int j = 0; j < A.cols(); ++j)
            if (row[j] < 0.0) {
                rep.forward_nonneg_ok = false;
                break;
            }
    }

    const DenseMatrix G = op.dense_gram(cap);
    rep.dominance_rows.assign(static_cast<std::size_t>(n), AssumptionRow{});
    detail::parallel_for(0, n, [&](int i) {
        std::vector<double> q_row(static_cast<std::size_t>(n));
        detail::accumulate_q_row(W, G, i, q_row);
        std::vector<char> in_window(static_cast<std::size_t>(n), 0);
        for (auto c : W.window(i)) in_window[c] = 1;
        double inside = 0.0, outside = 0.0;
        for (int j = 0; j < n; ++j)
            (in_window[j] ? inside : outside) += q_row[j];
        AssumptionRow& row = rep.dominance_rows[i];
        row.inside_sum = inside;
        row.outside_sum = outside;
        row.ok = outside < inside;
    });

    rep.dominance_ok = true;
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (const auto& row : rep.dominance_rows) {
        rep.dominance_ok = rep.dominance_ok && row.ok;
        rep.min_margin = std::min(rep.min_margin, row.inside_sum - row.outside_sum);
    }
    rep.overall = rep.support_ok && rep.forward_nonneg_ok && rep.dominance_ok;
    return rep;
}

/// Disk centers P_ii, radii R_i = Σ_{j≠i}|P_ij|, and the strict
/// containment test max(P_ii + R_i) < 1, min(P_ii - R_i) > -1.
inline GershgorinReport gershgorin(const DenseMatrix& P) {
    if (P.rows() != P.cols()) throw DimensionError("gershgorin: matrix must be square");
    const int n = P.rows();
    GershgorinReport rep;
    rep.rows.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* row = P.row(i);
        double radius = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) radius += std::abs(row[j]);
        rep.rows[i] = {row[i], radius};
    }
    rep.max_right = -std::numeric_limits<double>::infinity();
    rep.min_left = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.rows) {
        rep.max_right = std::max(rep.max_right, r.center + r.radius);
        rep.min_left = std::min(rep.min_left, r.center - r.radius);
    }
    rep.certified = rep.max_right < 1.0 && rep.min_left > -1.0;
    return rep;
}

/// Spectral radius via the dense nonsymmetric eigensolver.
inline double spectral_radius(const DenseMatrix& P, int iter_cap_factor = 100) {
    const auto eig = eigenvalues(P, iter_cap_factor);
    double rho = 0.0;
    for (const auto& mu : eig) rho = std::max(rho, std::abs(mu));
    return rho;
}

/// Per-row affine diagnostics of the Gershgorin geometry over a grid of
/// step sizes. Grid points at or above a row's sign-flip threshold are
/// skipped for that row.
inline std::vector<DiskAffineRow> affine_disk_diagnostics(const DenoiserMatrix& W,
                                                          const LinearOperator& op,
                                                          const std::vector<double>& gamma_grid,
                                                          int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    for (double g : gamma_grid)
        if (g < 0.0) throw Error("affine_disk_diagnostics: grid values must be >= 0");
    const int n = W.size();
    const DenseMatrix G = op.dense_gram(cap);
    std::vector<DiskAffineRow> rows(static_cast<std::size_t>(n));

    detail::parallel_for(0, n, [&](int i) {
        std::vector<double> q_row(static_cast<std::size_t>(n));
        detail::accumulate_q_row(W, G, i, q_row);
        const auto cols = W.window(i);
        const auto wts = W.row_weights(i);

        double w_ii = 0.0, w_row_sum = 0.0;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            w_row_sum += wts[k];
            if (static_cast<int>(cols[k]) == i) w_ii = wts[k];
        }

        std::vector<char> in_window(static_cast<std::size_t>(n), 0);
        for (auto c : cols) in_window[c] = 1;
        double inside = 0.0, outside = 0.0;
        for (int j = 0; j < n; ++j)
            (in_window[j] ? inside : outside) += q_row[j];

        DiskAffineRow& out = rows[i];
        out.gap_at_zero = (w_row_sum - w_ii) - w_ii;
        out.expected_gap = 1.0 - 2.0 * w_ii;
        out.slope_expected = outside - inside;

        // Sign-flip threshold: smallest ratio over in-window off-diagonal
        // entries with positive Q mass.
        out.beta = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const int j = static_cast<int>(cols[k]);
            if (j == i || q_row[j] <= 0.0) continue;
            out.beta = std::min(out.beta, wts[k] / q_row[j]);
        }

        double first_gamma = 0.0, first_val = 0.0, last_gamma = 0.0, last_val = 0.0;
        for (double g : gamma_grid) {
            if (!(g < out.beta)) continue;
            // All in-window off-diagonal entries of P must stay positive
            // at this grid point for the affine form to apply.
            bool valid = true;
            for (std::size_t k = 0; k < cols.size() && valid; ++k) {
                const int j = static_cast<int>(cols[k]);
                if (j != i && !(wts[k] - g * q_row[j] > 0.0)) valid = false;
            }
            if (!valid) continue;

            double center = -g * q_row[i];
            double radius = 0.0;
            std::size_t k = 0;
            for (int j = 0; j < n; ++j) {
                double wij = 0.0;
                if (k < cols.size() && static_cast<int>(cols[k]) == j) {
                    wij = wts[k];
                    ++k;
                }
                if (j == i)
                    center += wij;
                else
                    radius += std::abs(wij - g * q_row[j]);
            }
            const double edge = center + radius;
            const double predicted = 1.0 + g * (outside - inside);
            out.max_affine_error = std::max(out.max_affine_error, std::abs(edge - predicted));
            if (out.valid_grid_points == 0) {
                first_gamma = g;
                first_val = edge;
            }
            last_gamma = g;
            last_val = edge;
            ++out.valid_grid_points;
        }
        if (out.valid_grid_points >= 2 && last_gamma != first_gamma)
            out.slope_measured = (last_val - first_val) / (last_gamma - first_gamma);
    });
    return rows;
}

/// Largest step size for which the Gershgorin certificate holds on a
/// sampled prefix (0, δ̂]. Geometric probing locates a certified starting
/// point, bisection refines the boundary to the given tolerance, and a
/// final prefix sweep guards against non-interval certificate sets. The
/// disk containment is sufficient, not necessary, so the result is
/// generally below the true stability threshold.
inline double delta_search(const DenoiserMatrix& W, const LinearOperator& op, double tol,
                           int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    if (tol <= 0.0) throw Error("delta_search: tolerance must be positive");
    const AssumptionReport rep = check_assumptions(W, op, cap);
    if (!rep.overall)
        throw Error("delta_search: certificate preconditions fail on this instance");

    const DenseMatrix G = op.dense_gram(cap);
    const auto certified = [&](double gamma) {
        return gershgorin(iteration_matrix_with_gram(W, G, gamma)).certified;
    };

    double lo = 0.0, hi = 0.0;
    const double start = 4.0;
    for (int k = 0; k <= 60; ++k) {
        const double g = std::ldexp(start, -k);
        if (certified(g)) {
            lo = g;
            hi = (k == 0) ? 0.0 : std::ldexp(start, -(k - 1));
            break;
        }
    }
    if (lo == 0.0)
        throw Error("delta_search: certificate fails even at the smallest probe step size; "
                    "this contradicts the passing preconditions and indicates a degenerate "
                    "instance or a bug");
    if (hi == 0.0) {
        hi = lo * 2.0;
        while (certified(hi) && hi < 1e6) {
            lo = hi;
            hi *= 2.0;
        }
        if (hi >= 1e6) return lo;
    }

    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (certified(mid))
            lo = mid;
        else
            hi = mid;
    }

    // The bisection tracks one boundary; confirm the whole prefix.
    for (int round = 0; round < 4; ++round) {
        double failed_before = 0.0;
        bool all_ok = true;
        for (int s = 1; s <= 16; ++s) {
            const double g = lo * s / 16.0;
            if (!certified(g)) {
                all_ok = false;
                failed_before = lo * (s - 1) / 16.0;
                break;
            }
        }
        if (all_ok) break;
        lo = failed_before;
        if (lo <= 0.0)
            throw Error("delta_search: no certified prefix found");
    }
    return lo;
}

/// Largest eigenvalue of AᵀA (the Lipschitz constant of the data-term
/// gradient), by power iteration in operator form.
inline double gram_largest_eigenvalue(const LinearOperator& op, double rel_tol = 1e-12,
                                      int max_iters = 200000) {
    return spd_largest_eigenvalue(
        op.input_dim(), [&](const std::vector<double>& x) { return op.apply_gram(x); }, rel_tol,
        max_iters);
}

/// Largest singular value of W via power iteration on WᵀW. The returned
/// Rayleigh quotient never overshoots the true value, so it doubles as a
/// certified lower bound.
inline double largest_singular_value(const DenoiserMatrix& W, double rel_tol = 1e-13,
                                     int max_iters = 200000) {
    const double lam = spd_largest_eigenvalue(
        W.size(),
        [&](const std::vector<double>& x) { return W.apply_transpose(W.apply(x)); }, rel_tol,
        max_iters);
    return std::sqrt(std::max(0.0, lam));
}

/// One-stop analysis at a given step size: preconditions, disks, spectral
/// radius, and (when the preconditions pass) the certified step bound.
inline ConvergenceReport analyze_convergence(const DenoiserMatrix& W, const LinearOperator& op,
                                             double gamma, double delta_tol = 1e-3,
                                             int cap = kDenseCap) {
    detail::check_analysis_dims(W, op, cap);
    ConvergenceReport rep;
    rep.gamma_tested = gamma;
    rep.assumptions = check_assumptions(W, op, cap);
    const DenseMatrix P = iteration_matrix(W, op, gamma, cap);
    rep.gershgorin = gershgorin(P);
    rep.rho = spectral_radius(P);
    if (rep.assumptions.overall) {
        try {
            rep.certified_gamma = delta_search(W, op, delta_tol, cap);
        } catch (const Error&) {
            rep.certified_gamma = std::nullopt;
        }
    }
    return rep;
}

inline void write_report_text(const ConvergenceReport& rep, std::ostream& os) {
    char buf[256];
    const int n = static_cast<int>(rep.gershgorin.rows.size());
    os << "convergence analysis report\n";
    os << "===========================\n";
    std::snprintf(buf, sizeof(buf), "pixels analyzed        : %d\n", n);
    os << buf;
    std::snprintf(buf, sizeof(buf), "gamma tested           : %.12g\n", rep.gamma_tested);
    os << buf;
    os << "\npreconditions\n";
    os << "  window support positivity : " << (rep.assumptions.support_ok ? "pass" : "FAIL")
       << "\n";
    os << "  forward nonnegativity     : "
       << (rep.assumptions.forward_nonneg_ok ? "pass" : "FAIL") << "\n";
    int failing = 0;
    for (const auto& r : rep.assumptions.dominance_rows)
        if (!r.ok) ++failing;
    std::snprintf(buf, sizeof(buf),
                  "  in-window dominance       : %s (%d failing rows, min margin %.6g)\n",
                  rep.assumptions.dominance_ok ? "pass" : "FAIL", failing,
                  rep.assumptions.min_margin);
    os << buf;
    os << "\ngershgorin geometry at gamma\n";
    std::snprintf(buf, sizeof(buf), "  max_i (P_ii + R_i)        : %.12g\n",
                  rep.gershgorin.max_right);
    os << buf;
    std::snprintf(buf, sizeof(buf), "  min_i (P_ii - R_i)        : %.12g\n",
                  rep.gershgorin.min_left);
    os << buf;
    os << "  certificate               : " << (rep.gershgorin.certified ? "PASS" : "fail")
       << "\n";
    std::snprintf(buf, sizeof(buf), "\nspectral radius rho(P)   : %.12g (%s 1)\n", rep.rho,
                  rep.rho < 1.0 ? "<" : ">=");
    os << buf;
    if (rep.certified_gamma) {
        std::snprintf(buf, sizeof(buf), "certified step bound     : %.6g\n",
                      *rep.certified_gamma);
        os << buf;
    } else {
        os << "certified step bound     : n/a (preconditions fail)\n";
    }
}

/// One CSV row per pixel: index (1-based), disk center, disk radius, and
/// the in/out window mass of Q.
inline void write_rows_csv(const ConvergenceReport& rep, std::ostream& os) {
    os << "i,P_ii,R_i,inside_sum,outside_sum\n";
    char buf[200];
    const std::size_t n = rep.gershgorin.rows.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = rep.gershgorin.rows[i];
        const auto& a = i < rep.assumptions.dominance_rows.size()
                            ? rep.assumptions.dominance_rows[i]
                            : AssumptionRow{};
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g\n", i + 1, g.center,
                      g.radius, a.inside_sum, a.outside_sum);
        os << buf;
    }
}

} // namespace pnpista

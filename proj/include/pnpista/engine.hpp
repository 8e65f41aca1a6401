// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pnpista/errors.hpp"
#include "pnpista/forward_model.hpp"
#include "pnpista/image.hpp"
#include "pnpista/linalg.hpp"
#include "pnpista/nlm.hpp"
#include "pnpista/spectral.hpp"

namespace pnpista {

struct RunConfig {
    double gamma = 0.9;
    int max_iters = 400;
    double residual_tol = 0.0; // stop when ||x_{k+1} - x_k||_2 <= tol
    int adapt_iters = 0;       // rebuild W from the iterate for this many steps, then freeze
    int snapshot_every = 0;    // 0 = no snapshots
};

enum class StopReason { tol_reached, max_iters, divergence_guard };

inline const char* to_string(StopReason r) {
    switch (r) {
    case StopReason::tol_reached: return "tol-reached";
    case StopReason::max_iters: return "max-iters";
    case StopReason::divergence_guard: return "divergence-guard";
    }
    return "unknown";
}

struct IterationRecord {
    int iter = 0;
    double residual = 0.0; // ||x_{k+1} - x_k||_2, peak-1 units
    double psnr_db = std::numeric_limits<double>::quiet_NaN(); // NaN when no ground truth
};

struct IterationTrace {
    std::vector<IterationRecord> records;
    std::vector<double> final_iterate;
    StopReason reason = StopReason::max_iters;
    std::vector<std::pair<int, std::vector<double>>> snapshots;
};

// Runaway iterations stop once the step length exceeds this (peak-1
// units); enough room to record the growth pattern first.
inline constexpr double kDivergenceGuard = 1e6;

/// One affine update W(x - γ AᵀA x) + γ W Aᵀ y, evaluated in operator
/// form (P is never materialized). γ = 0 is accepted here and gives the
/// bare denoising step W x.
inline std::vector<double> pnp_step(const DenoiserMatrix& W, const LinearOperator& op,
                                    double gamma, const std::vector<double>& x,
                                    const std::vector<double>& y) {
    if (W.size() != op.input_dim())
        throw DimensionError("pnp_step: denoiser size does not match operator");
    if (static_cast<int>(x.size()) != op.input_dim())
        throw DimensionError("pnp_step: iterate length mismatch");
    if (static_cast<int>(y.size()) != op.output_dim())
        throw DimensionError("pnp_step: observation length mismatch");
    if (gamma < 0.0) throw Error("pnp_step: gamma must be nonnegative");

    if (gamma == 0.0) return W.apply(x);
    std::vector<double> v = x;
    const std::vector<double> g = op.apply_gram(x);
    const std::vector<double> a = op.apply_adjoint(y);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += gamma * (a[i] - g[i]);
    return W.apply(v);
}

/// Run the PnP iteration. For the first adapt_iters steps the denoiser is
/// rebuilt from the current iterate before stepping; afterwards it stays
/// frozen, so the tail of the trace is governed by a fixed affine map.
/// With adapt_iters = 0 the weights come from `guide` throughout.
inline IterationTrace run(const RunConfig& cfg, const std::vector<double>& y,
                          const LinearOperator& op, const Image& guide,
                          const NlmParams& params, const std::vector<double>& x0,
                          const Image* ground_truth = nullptr) {
    if (cfg.max_iters < 1) throw Error("run: max_iters must be >= 1");
    if (cfg.gamma <= 0.0) throw Error("run: gamma must be positive");
    if (cfg.residual_tol < 0.0) throw Error("run: residual_tol must be >= 0");
    if (cfg.adapt_iters < 0) throw Error("run: adapt_iters must be >= 0");
    if (guide.size() != op.input_dim())
        throw DimensionError("run: guide dimensions do not match operator");
    if (static_cast<int>(x0.size()) != op.input_dim())
        throw DimensionError("run: x0 length mismatch");
    if (ground_truth &&
        (ground_truth->width != guide.width || ground_truth->height != guide.height))
        throw DimensionError("run: ground truth dimensions do not match");

    IterationTrace trace;
    trace.records.reserve(static_cast<std::size_t>(std::min(cfg.max_iters, 1 << 20)));

    DenoiserMatrix W;
    if (cfg.adapt_iters == 0) W = build_nlm(guide, params);

    std::vector<double> x = x0;
    trace.reason = StopReason::max_iters;
    for (int k = 0; k < cfg.max_iters; ++k) {
        if (k < cfg.adapt_iters)
            W = build_nlm(Image(guide.width, guide.height, x), params);

        std::vector<double> next = pnp_step(W, op, cfg.gamma, x, y);
        for (double v : next)
            if (!std::isfinite(v))
                throw Error("run: non-finite iterate at iteration " + std::to_string(k));

        IterationRecord rec;
        rec.iter = k;
        rec.residual = norm2_diff(next, x);
        if (ground_truth)
            rec.psnr_db = psnr(Image(guide.width, guide.height, next), *ground_truth);
        trace.records.push_back(rec);

        x = std::move(next);
        if (cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0)
            trace.snapshots.emplace_back(k, x);

        if (rec.residual > kDivergenceGuard) {
            trace.reason = StopReason::divergence_guard;
            break;
        }
        if (rec.residual <= cfg.residual_tol) {
            trace.reason = StopReason::tol_reached;
            break;
        }
    }
    trace.final_iterate = std::move(x);
    return trace;
}

/// Exact fixed point x* = (I - P)^-1 q by dense direct solve. Requires
/// ρ(P) < 1 (pass rho_hint when the radius is already known to skip the
/// eigensolve).
inline std::vector<double> fixed_point(const DenoiserMatrix& W, const LinearOperator& op,
                                       double gamma, const std::vector<double>& y,
                                       int cap = kDenseCap,
                                       std::optional<double> rho_hint = std::nullopt) {
    const int n = W.size();
    DenseMatrix P = iteration_matrix(W, op, gamma, cap);
    const double rho = rho_hint ? *rho_hint : spectral_radius(P);
    if (!(rho < 1.0))
        throw Error("fixed_point: spectral radius " + std::to_string(rho) +
                    " >= 1, the iteration map has no attracting fixed point");
    const std::vector<double> q = iteration_offset(W, op, gamma, y, cap);

    DenseMatrix M(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        double* mrow = M.row(i);
        const double* prow = P.row(i);
        for (int j = 0; j < n; ++j) mrow[j] = -prow[j];
        mrow[i] += 1.0;
    }
    std::vector<double> x = lu_solve(M, q);

    std::vector<double> res = matvec(M, x);
    for (std::size_t i = 0; i < res.size(); ++i) res[i] -= q[i];
    const double rnorm = norm2(res);
    if (rnorm > 1e-10 * (1.0 + norm2(q)))
        throw Error("fixed_point: direct solve residual " + std::to_string(rnorm) +
                    " exceeds tolerance");
    return x;
}

/// Trace CSV: header "iter,residual,psnr_db"; the psnr column is empty
/// when no ground truth was supplied.
inline void write_trace_csv(const IterationTrace& trace, std::ostream& os) {
    os << "iter,residual,psnr_db\n";
    char buf[128];
    for (const auto& rec : trace.records) {
        if (std::isnan(rec.psnr_db))
            std::snprintf(buf, sizeof(buf), "%d,%.12g,\n", rec.iter, rec.residual);
        else
            std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g\n", rec.iter, rec.residual,
                          rec.psnr_db);
        os << buf;
    }
}

} // namespace pnpista

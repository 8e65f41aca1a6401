// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "pnpista/errors.hpp"
#include "pnpista/image.hpp"
#include "pnpista/linalg.hpp"
#include "pnpista/parallel.hpp"

namespace pnpista {

/// Patch/window geometry and bandwidth of the kernel denoiser. The patch
/// is (2*patch_radius+1)^2; the search window is the (2*window_radius+1)^2
/// square around each pixel, clipped at the borders (Chebyshev ball, so
/// window membership is symmetric). h is in peak-1 intensity units.
struct NlmParams {
    int patch_radius = 3;
    int window_radius = 10;
    double h = 0.05;
};

/// Row-stochastic denoiser weights W = D^-1 K stored sparsely per row
/// over the window index sets. The kernel K is symmetric; W is not.
/// Immutable after construction and safe to share across threads.
class DenoiserMatrix {
public:
    DenoiserMatrix() = default;

    int size() const { return n_; }
    std::uint64_t guide_hash() const { return guide_hash_; }

    /// Window Ω_i: sorted pixel indices with positive weight in row i.
    /// Always contains i itself.
    std::span<const std::uint32_t> window(int i) const {
        check_row(i);
        return {cols_.data() + offsets_[i], cols_.data() + offsets_[i + 1]};
    }

    std::span<const double> row_weights(int i) const {
        check_row(i);
        return {weights_.data() + offsets_[i], weights_.data() + offsets_[i + 1]};
    }

    /// Row sum of the kernel matrix K (the diagonal of D), so that
    /// K_ij = kernel_row_sum(i) * W_ij.
    double kernel_row_sum(int i) const {
        check_row(i);
        return d_[i];
    }

    std::size_t stored_entries() const { return cols_.size(); }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != n_)
            throw DimensionError("DenoiserMatrix::apply: length mismatch");
        std::vector<double> out(static_cast<std::size_t>(n_));
        detail::parallel_for(0, n_, [&](int i) {
            double s = 0.0;
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
                s += weights_[k] * x[cols_[k]];
            out[i] = s;
        });
        return out;
    }

    std::vector<double> apply_transpose(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != n_)
            throw DimensionError("DenoiserMatrix::apply_transpose: length mismatch");
        std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
        for (int i = 0; i < n_; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
                out[cols_[k]] += weights_[k] * xi;
        }
        return out;
    }

    DenseMatrix dense(int cap = kDenseCap) const {
        if (n_ > cap)
            throw Error("DenoiserMatrix::dense: n = " + std::to_string(n_) +
                        " exceeds cap " + std::to_string(cap));
        DenseMatrix M(n_, n_, 0.0);
        for (int i = 0; i < n_; ++i)
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
                M(i, static_cast<int>(cols_[k])) = weights_[k];
        return M;
    }

    /// Plain-text sparse triplets "i j w", one entry per line, 1-based.
    void dump_triplets(std::ostream& os) const {
        char buf[64];
        for (int i = 0; i < n_; ++i)
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                std::snprintf(buf, sizeof(buf), "%d %u %.17g\n", i + 1, cols_[k] + 1,
                              weights_[k]);
                os << buf;
            }
    }

    /// Build from explicit rows. Meant for synthetic denoisers in
    /// analysis and tests (identity, hand-crafted windows). Rows must be
    /// sorted, contain the diagonal, carry strictly positive weights, and
    /// sum to 1 within 1e-9.
    static DenoiserMatrix from_rows(int n, const std::vector<std::vector<std::uint32_t>>& cols,
                                    const std::vector<std::vector<double>>& weights,
                                    const std::vector<double>& kernel_row_sums = {},
                                    std::uint64_t guide_hash = 0) {
        if (n <= 0) throw Error("DenoiserMatrix::from_rows: empty matrix");
        if (cols.size() != static_cast<std::size_t>(n) || weights.size() != cols.size())
            throw DimensionError("DenoiserMatrix::from_rows: row count mismatch");
        DenoiserMatrix W;
        W.n_ = n;
        W.guide_hash_ = guide_hash;
        W.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
        for (int i = 0; i < n; ++i) {
            if (cols[i].size() != weights[i].size() || cols[i].empty())
                throw Error("DenoiserMatrix::from_rows: bad row " + std::to_string(i));
            double sum = 0.0;
            bool has_diag = false;
            for (std::size_t k = 0; k < cols[i].size(); ++k) {
                if (cols[i][k] >= static_cast<std::uint32_t>(n))
                    throw Error("DenoiserMatrix::from_rows: column out of range");
                if (k > 0 && cols[i][k] <= cols[i][k - 1])
                    throw Error("DenoiserMatrix::from_rows: columns must be sorted unique");
                if (weights[i][k] <= 0.0)
                    throw Error("DenoiserMatrix::from_rows: weights must be positive");
                if (cols[i][k] == static_cast<std::uint32_t>(i)) has_diag = true;
                sum += weights[i][k];
            }
            if (!has_diag)
                throw Error("DenoiserMatrix::from_rows: row " + std::to_string(i) +
                            " does not contain its own pixel");
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error("DenoiserMatrix::from_rows: row " + std::to_string(i) +
                            " is not stochastic (sum " + std::to_string(sum) + ")");
            W.offsets_[i + 1] = W.offsets_[i] + cols[i].size();
        }
        W.cols_.reserve(W.offsets_[n]);
        W.weights_.reserve(W.offsets_[n]);
        for (int i = 0; i < n; ++i) {
            W.cols_.insert(W.cols_.end(), cols[i].begin(), cols[i].end());
            W.weights_.insert(W.weights_.end(), weights[i].begin(), weights[i].end());
        }
        if (kernel_row_sums.empty())
            W.d_.assign(static_cast<std::size_t>(n), 1.0);
        else if (kernel_row_sums.size() == static_cast<std::size_t>(n))
            W.d_ = kernel_row_sums;
        else
            throw DimensionError("DenoiserMatrix::from_rows: kernel row sum length mismatch");
        return W;
    }

    friend DenoiserMatrix build_nlm(const Image& guide, const NlmParams& params);

private:
    void check_row(int i) const {
        if (i < 0 || i >= n_)
            throw Error("DenoiserMatrix: row index " + std::to_string(i) + " out of range");
    }

    int n_ = 0;
    std::vector<std::size_t> offsets_; // n+1 CSR offsets
    std::vector<std::uint32_t> cols_;  // window indices, sorted per row
    std::vector<double> weights_;      // W_ij > 0
    std::vector<double> d_;            // kernel row sums D_ii
    std::uint64_t guide_hash_ = 0;
};

namespace detail {

// Mean squared difference between the patches centered at (ri,ci) and
// (rj,cj), restricted to offsets valid for both patches. Symmetric in
// the two centers, which keeps the kernel matrix symmetric.
inline double patch_distance_sq(const Image& g, int ri, int ci, int rj, int cj, int radius) {
    const int H = g.height, W = g.width;
    const int dr_lo = std::max({-radius, -ri, -rj});
    const int dr_hi = std::min({radius, H - 1 - ri, H - 1 - rj});
    const int dc_lo = std::max({-radius, -ci, -cj});
    const int dc_hi = std::min({radius, W - 1 - ci, W - 1 - cj});
    double s = 0.0;
    int count = 0;
    for (int dr = dr_lo; dr <= dr_hi; ++dr) {
        const double* pi = &g.data[static_cast<std::size_t>(ri + dr) * W + ci];
        const double* pj = &g.data[static_cast<std::size_t>(rj + dr) * W + cj];
        for (int dc = dc_lo; dc <= dc_hi; ++dc) {
            const double diff = pi[dc] - pj[dc];
            s += diff * diff;
            ++count;
        }
    }
    return s / static_cast<double>(count);
}

} // namespace detail

/// Build the nonlocal-means weight matrix from a guide image:
/// K_ij = exp(-d²(i,j)/h²) over the window, D = diag of row sums of K,
/// W = D^-1 K. Row construction is parallel; rows are independent.
inline DenoiserMatrix build_nlm(const Image& guide, const NlmParams& params) {
    if (guide.size() == 0 || guide.data.empty()) throw Error("build_nlm: empty guide image");
    if (params.h <= 0.0) throw Error("build_nlm: bandwidth h must be positive");
    if (params.patch_radius < 0) throw Error("build_nlm: patch_radius must be >= 0");
    if (params.window_radius < 1) throw Error("build_nlm: window_radius must be >= 1");

    const int H = guide.height, W = guide.width, n = H * W;
    const int S = params.window_radius;
    const int r = params.patch_radius;
    const double inv_h2 = 1.0 / (params.h * params.h);

    DenoiserMatrix M;
    M.n_ = n;
    M.guide_hash_ = hash_image(guide);
    M.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i) {
        const int ri = i / W, ci = i % W;
        const int wh = std::min(H - 1, ri + S) - std::max(0, ri - S) + 1;
        const int ww = std::min(W - 1, ci + S) - std::max(0, ci - S) + 1;
        M.offsets_[i + 1] = M.offsets_[i] + static_cast<std::size_t>(wh) * ww;
    }
    M.cols_.resize(M.offsets_[n]);
    M.weights_.resize(M.offsets_[n]);
    M.d_.resize(static_cast<std::size_t>(n));

    detail::parallel_for(0, n, [&](int i) {
        const int ri = i / W, ci = i % W;
        std::size_t k = M.offsets_[i];
        double row_sum = 0.0;
        for (int rj = std::max(0, ri - S); rj <= std::min(H - 1, ri + S); ++rj) {
            for (int cj = std::max(0, ci - S); cj <= std::min(W - 1, ci + S); ++cj) {
                const double dist2 = detail::patch_distance_sq(guide, ri, ci, rj, cj, r);
                const double kij = std::exp(-dist2 * inv_h2);
                M.cols_[k] = static_cast<std::uint32_t>(rj * W + cj);
                M.weights_[k] = kij;
                row_sum += kij;
                ++k;
            }
        }
        M.d_[i] = row_sum;
        const double inv = 1.0 / row_sum;
        for (std::size_t kk = M.offsets_[i]; kk < k; ++kk) M.weights_[kk] *= inv;
    });
    return M;
}

/// Window-of-one denoiser (W = I). A degenerate member of the family,
/// used by the analysis to exercise failure modes of the certificate.
inline DenoiserMatrix make_identity_denoiser(int n) {
    std::vector<std::vector<std::uint32_t>> cols(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        cols[i] = {static_cast<std::uint32_t>(i)};
        w[i] = {1.0};
    }
    return DenoiserMatrix::from_rows(n, cols, w);
}

} // namespace pnpista

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "pnpista/errors.hpp"
#include "pnpista/image.hpp"
#include "pnpista/linalg.hpp"
#include "pnpista/parallel.hpp"

namespace pnpista {

enum class OperatorKind { inpainting, deblurring, superresolution };

inline const char* to_string(OperatorKind k) {
    switch (k) {
    case OperatorKind::inpainting: return "inpainting";
    case OperatorKind::deblurring: return "deblurring";
    case OperatorKind::superresolution: return "superresolution";
    }
    return "unknown";
}

/// Point spread function taps, row-major. Taps are normalized to unit sum
/// when an operator is built from them.
struct Psf {
    int rows = 0;
    int cols = 0;
    std::vector<double> taps;
};

inline Psf delta_psf() { return Psf{1, 1, {1.0}}; }

inline Psf uniform_psf(int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw Error("uniform_psf: size must be positive");
    return Psf{rows, cols,
               std::vector<double>(static_cast<std::size_t>(rows) * cols,
                                   1.0 / (static_cast<double>(rows) * cols))};
}

/// Load a PSF from plain text: first line "h w", then h*w whitespace
/// separated reals, row-major.
inline Psf load_psf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open PSF file: " + path);
    Psf psf;
    if (!(in >> psf.rows >> psf.cols))
        throw ParseError("PSF file " + path + ": malformed size line (expected 'h w')");
    if (psf.rows <= 0 || psf.cols <= 0)
        throw ParseError("PSF file " + path + ": nonpositive dimensions");
    const std::size_t count = static_cast<std::size_t>(psf.rows) * psf.cols;
    psf.taps.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!(in >> psf.taps[i]))
            throw ParseError("PSF file " + path + ": missing tap " + std::to_string(i + 1) +
                             " of " + std::to_string(count));
    }
    return psf;
}

/// Linear forward model A for inpainting (row subset of the identity),
/// periodic deblurring (circulant), or superresolution (decimated blur).
/// Immutable once built; all apply* calls are pure.
class LinearOperator {
public:
    OperatorKind kind() const { return kind_; }
    int input_dim() const { return n_; }
    int output_dim() const { return m_; }
    int grid_width() const { return width_; }
    int grid_height() const { return height_; }
    int decimation_factor() const { return factor_; }

    /// Observed pixel indices in raster order (inpainting only).
    const std::vector<int>& observed() const { return observed_; }

    std::vector<double> apply(const std::vector<double>& x) const {
        require_len(x, n_, "apply");
        switch (kind_) {
        case OperatorKind::inpainting: {
            std::vector<double> out(observed_.size());
            for (std::size_t k = 0; k < observed_.size(); ++k) out[k] = x[observed_[k]];
            return out;
        }
        case OperatorKind::deblurring:
            return convolve(x, /*flip=*/false);
        case OperatorKind::superresolution: {
            const std::vector<double> blurred = convolve(x, /*flip=*/false);
            std::vector<double> out(static_cast<std::size_t>(m_));
            const int ow = width_ / factor_;
            const int oh = height_ / factor_;
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c)
                    out[static_cast<std::size_t>(r) * ow + c] =
                        blurred[static_cast<std::size_t>(r) * factor_ * width_ + c * factor_];
            return out;
        }
        }
        throw Error("apply: unknown operator kind");
    }

    std::vector<double> apply_adjoint(const std::vector<double>& z) const {
        require_len(z, m_, "apply_adjoint");
        switch (kind_) {
        case OperatorKind::inpainting: {
            std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
            for (std::size_t k = 0; k < observed_.size(); ++k) out[observed_[k]] = z[k];
            return out;
        }
        case OperatorKind::deblurring:
            return convolve(z, /*flip=*/true);
        case OperatorKind::superresolution: {
            std::vector<double> up(static_cast<std::size_t>(n_), 0.0);
            const int ow = width_ / factor_;
            const int oh = height_ / factor_;
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c)
                    up[static_cast<std::size_t>(r) * factor_ * width_ + c * factor_] =
                        z[static_cast<std::size_t>(r) * ow + c];
            return convolve(up, /*flip=*/true);
        }
        }
        throw Error("apply_adjoint: unknown operator kind");
    }

    /// AᵀA x, computed as apply_adjoint(apply(x)).
    std::vector<double> apply_gram(const std::vector<double>& x) const {
        require_len(x, n_, "apply_gram");
        if (kind_ == OperatorKind::inpainting) {
            std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
            for (int idx : observed_) out[idx] = x[idx];
            return out;
        }
        return apply_adjoint(apply(x));
    }

    /// Entrywise materialization of A, built from the operator structure
    /// (identity rows / circulant taps), not from apply().
    DenseMatrix dense_matrix(int cap = kDenseCap) const {
        check_cap(cap);
        DenseMatrix A(m_, n_, 0.0);
        switch (kind_) {
        case OperatorKind::inpainting:
            for (std::size_t k = 0; k < observed_.size(); ++k)
                A(static_cast<int>(k), observed_[k]) = 1.0;
            break;
        case OperatorKind::deblurring:
            for (int r = 0; r < height_; ++r)
                for (int c = 0; c < width_; ++c)
                    fill_blur_row(A, r * width_ + c, r, c);
            break;
        case OperatorKind::superresolution: {
            const int ow = width_ / factor_;
            const int oh = height_ / factor_;
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c)
                    fill_blur_row(A, r * ow + c, r * factor_, c * factor_);
            break;
        }
        }
        return A;
    }

    /// Entrywise materialization of AᵀA. Diagonal for inpainting; built
    /// column-by-column from apply_gram for the convolutional kinds.
    DenseMatrix dense_gram(int cap = kDenseCap) const {
        check_cap(cap);
        DenseMatrix G(n_, n_, 0.0);
        if (kind_ == OperatorKind::inpainting) {
            for (int idx : observed_) G(idx, idx) = 1.0;
            return G;
        }
        detail::parallel_for(0, n_, [&](int j) {
            std::vector<double> e(static_cast<std::size_t>(n_), 0.0);
            e[j] = 1.0;
            const std::vector<double> col = apply_gram(e);
            for (int i = 0; i < n_; ++i) G(i, j) = col[i];
        });
        return G;
    }

    friend LinearOperator make_inpainting(const Mask& mask);
    friend LinearOperator make_deblurring(const Psf& psf, int width, int height);
    friend LinearOperator make_superresolution(const Psf& psf, int factor, int width, int height);

private:
    struct Tap {
        int dy, dx;
        double w;
    };

    LinearOperator() = default;

    void require_len(const std::vector<double>& v, int len, const char* what) const {
        if (static_cast<int>(v.size()) != len)
            throw DimensionError(std::string(what) + ": expected length " + std::to_string(len) +
                                 ", got " + std::to_string(v.size()));
    }

    void check_cap(int cap) const {
        if (n_ > cap)
            throw Error("dense materialization refused: n = " + std::to_string(n_) +
                        " exceeds cap " + std::to_string(cap));
    }

    static int wrap(int a, int m) { return a < 0 ? a + m : (a >= m ? a - m : a); }

    // Periodic 2-D convolution with the stored taps; flip reflects the
    // offsets, which is exactly the adjoint of the unflipped map.
    std::vector<double> convolve(const std::vector<double>& x, bool flip) const {
        std::vector<double> out(static_cast<std::size_t>(n_));
        const int W = width_, H = height_;
        detail::parallel_for(0, H, [&](int r) {
            for (int c = 0; c < W; ++c) {
                double s = 0.0;
                for (const Tap& t : taps_) {
                    const int rr = wrap(flip ? r - t.dy : r + t.dy, H);
                    const int cc = wrap(flip ? c - t.dx : c + t.dx, W);
                    s += t.w * x[static_cast<std::size_t>(rr) * W + cc];
                }
                out[static_cast<std::size_t>(r) * W + c] = s;
            }
        });
        return out;
    }

    void fill_blur_row(DenseMatrix& A, int row, int r, int c) const {
        for (const Tap& t : taps_) {
            const int rr = wrap(r + t.dy, height_);
            const int cc = wrap(c + t.dx, width_);
            A(row, rr * width_ + cc) += t.w;
        }
    }

    static std::vector<Tap> normalized_taps(const Psf& psf, int width, int height) {
        if (psf.rows <= 0 || psf.cols <= 0 ||
            psf.taps.size() != static_cast<std::size_t>(psf.rows) * psf.cols)
            throw Error("PSF tap array does not match its declared size");
        if (psf.rows > height || psf.cols > width)
            throw Error("PSF (" + std::to_string(psf.rows) + "x" + std::to_string(psf.cols) +
                        ") is larger than the image grid");
        double sum = 0.0;
        for (double t : psf.taps) {
            if (t < 0.0) throw Error("PSF taps must be nonnegative");
            sum += t;
        }
        if (sum <= 0.0) throw Error("PSF taps must have positive sum");
        std::vector<Tap> taps;
        taps.reserve(psf.taps.size());
        const int cy = psf.rows / 2;
        const int cx = psf.cols / 2;
        for (int r = 0; r < psf.rows; ++r)
            for (int c = 0; c < psf.cols; ++c) {
                const double w = psf.taps[static_cast<std::size_t>(r) * psf.cols + c] / sum;
                if (w > 0.0) taps.push_back({r - cy, c - cx, w});
            }
        return taps;
    }

    OperatorKind kind_ = OperatorKind::inpainting;
    int n_ = 0;
    int m_ = 0;
    int width_ = 0;
    int height_ = 0;
    int factor_ = 1;
    std::vector<int> observed_;
    std::vector<Tap> taps_;
};

/// Coordinate-selection operator: rows of A are the rows of the identity
/// at the observed pixels, in raster order.
inline LinearOperator make_inpainting(const Mask& mask) {
    LinearOperator op;
    op.kind_ = OperatorKind::inpainting;
    op.n_ = static_cast<int>(mask.size());
    if (op.n_ == 0) throw Error("make_inpainting: empty mask");
    for (int i = 0; i < op.n_; ++i)
        if (mask[i]) op.observed_.push_back(i);
    if (op.observed_.empty()) throw Error("make_inpainting: no observed pixels");
    op.m_ = static_cast<int>(op.observed_.size());
    return op;
}

/// Periodic (circulant) blur on a width x height grid. Taps are
/// normalized to unit sum, so the operator preserves constants.
inline LinearOperator make_deblurring(const Psf& psf, int width, int height) {
    if (width <= 0 || height <= 0) throw Error("make_deblurring: grid must be positive");
    LinearOperator op;
    op.kind_ = OperatorKind::deblurring;
    op.width_ = width;
    op.height_ = height;
    op.n_ = width * height;
    op.m_ = op.n_;
    op.taps_ = LinearOperator::normalized_taps(psf, width, height);
    return op;
}

/// Blur followed by keep-every-factor-th decimation in each dimension
/// (top-left phase).
inline LinearOperator make_superresolution(const Psf& psf, int factor, int width, int height) {
    if (width <= 0 || height <= 0) throw Error("make_superresolution: grid must be positive");
    if (factor < 1) throw Error("make_superresolution: factor must be >= 1");
    if (width % factor != 0 || height % factor != 0)
        throw Error("make_superresolution: factor " + std::to_string(factor) +
                    " does not divide grid " + std::to_string(width) + "x" +
                    std::to_string(height));
    LinearOperator op;
    op.kind_ = OperatorKind::superresolution;
    op.width_ = width;
    op.height_ = height;
    op.factor_ = factor;
    op.n_ = width * height;
    op.m_ = op.n_ / (factor * factor);
    op.taps_ = LinearOperator::normalized_taps(psf, width, height);
    return op;
}

} // namespace pnpista

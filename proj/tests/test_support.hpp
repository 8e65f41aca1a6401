// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "pnpista/engine.hpp"
#include "pnpista/forward_model.hpp"
#include "pnpista/image.hpp"
#include "pnpista/nlm.hpp"
#include "pnpista/spectral.hpp"

namespace testsup {

inline pnpista::Image random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    pnpista::Image img(w, h);
    for (auto& v : img.data) v = u(rng);
    return img;
}

inline std::vector<double> random_vector(int n, std::uint64_t seed, double lo = 0.0,
                                         double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    return v;
}

/// Random observation mask with the given missing fraction. When
/// ensure_window_radius > 0, every (2S+1)^2 window is patched to contain
/// at least one observed pixel.
inline pnpista::Mask random_mask(int w, int h, double missing_fraction, std::uint64_t seed,
                                 int ensure_window_radius = 0) {
    const int n = w * h;
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int missing = static_cast<int>(missing_fraction * n);
    pnpista::Mask mask(static_cast<std::size_t>(n), 1);
    for (int k = 0; k < missing && k < n; ++k) mask[idx[k]] = 0;

    if (ensure_window_radius > 0) {
        const int S = ensure_window_radius;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                bool has_observed = false;
                for (int rr = std::max(0, r - S); rr <= std::min(h - 1, r + S) && !has_observed;
                     ++rr)
                    for (int cc = std::max(0, c - S); cc <= std::min(w - 1, c + S); ++cc)
                        if (mask[rr * w + cc]) {
                            has_observed = true;
                            break;
                        }
                if (!has_observed) mask[r * w + c] = 1;
            }
    }
    return mask;
}

/// Quadratic brute-force nonlocal-means kernel: the full n x n matrix
/// K_ij = exp(-d²(i,j)/h²) over the windows, built with a plain double
/// loop over all pixel pairs. Oracle for build_nlm.
inline pnpista::DenseMatrix brute_force_nlm_kernel(const pnpista::Image& g,
                                                   const pnpista::NlmParams& p) {
    const int H = g.height, W = g.width, n = H * W;
    pnpista::DenseMatrix K(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        const int ri = i / W, ci = i % W;
        for (int j = 0; j < n; ++j) {
            const int rj = j / W, cj = j % W;
            if (std::abs(ri - rj) > p.window_radius || std::abs(ci - cj) > p.window_radius)
                continue;
            double sum = 0.0;
            int count = 0;
            for (int dr = -p.patch_radius; dr <= p.patch_radius; ++dr)
                for (int dc = -p.patch_radius; dc <= p.patch_radius; ++dc) {
                    const int ar = ri + dr, ac = ci + dc;
                    const int br = rj + dr, bc = cj + dc;
                    if (ar < 0 || ar >= H || ac < 0 || ac >= W) continue;
                    if (br < 0 || br >= H || bc < 0 || bc >= W) continue;
                    const double d = g.at(ar, ac) - g.at(br, bc);
                    sum += d * d;
                    ++count;
                }
            K(i, j) = std::exp(-(sum / count) / (p.h * p.h));
        }
    }
    return K;
}

struct InpaintingInstance {
    int side = 0;
    pnpista::Image guide;
    pnpista::Mask mask;
    pnpista::LinearOperator op;
    pnpista::DenoiserMatrix W;
    std::vector<double> y;
};

/// Random inpainting instance in the regime where the certificate is
/// provable: every window of the denoiser contains an observed pixel.
inline InpaintingInstance make_inpainting_instance(int side, double missing_fraction,
                                                   std::uint64_t seed,
                                                   const pnpista::NlmParams& params) {
    InpaintingInstance inst;
    inst.side = side;
    inst.guide = random_image(side, side, seed);
    inst.mask = random_mask(side, side, missing_fraction, seed + 1, params.window_radius);
    inst.op = pnpista::make_inpainting(inst.mask);
    inst.W = pnpista::build_nlm(inst.guide, params);
    const pnpista::Image noisy = pnpista::add_gaussian_noise(inst.guide, 10.0 / 255.0, seed + 2);
    inst.y = inst.op.apply(noisy.data);
    return inst;
}

} // namespace testsup

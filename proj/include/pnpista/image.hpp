// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pnpista/digest.hpp"
#include "pnpista/errors.hpp"

namespace pnpista {

/// Grayscale raster. Intensities are stored as doubles in peak-1 units;
/// only file I/O clamps to [0,1], intermediate values may leave the range.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data; // row-major, length width*height

    Image() = default;

    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    }

    Image(int w, int h, std::vector<double> d) : width(w), height(h), data(std::move(d)) {
        if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
        if (data.size() != static_cast<std::size_t>(w) * h)
            throw DimensionError("image data length does not match width*height");
    }

    int size() const { return width * height; }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

/// Per-pixel observation flags: nonzero = observed.
using Mask = std::vector<std::uint8_t>;

inline std::uint64_t hash_image(const Image& img) {
    std::uint64_t h = fnv1a64(&img.width, sizeof(img.width));
    h = fnv1a64(&img.height, sizeof(img.height), h);
    if (!img.data.empty())
        h = fnv1a64(img.data.data(), img.data.size() * sizeof(double), h);
    return h;
}

namespace detail {

struct PgmCursor {
    const std::string& bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }

    // Whitespace and '#' comments are interchangeable separators in the header.
    void skip_separators() {
        while (pos < bytes.size()) {
            char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* field) {
        skip_separators();
        if (eof())
            throw ParseError(std::string("malformed header: missing ") + field +
                             " at byte " + std::to_string(pos));
        if (!std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw ParseError(std::string("malformed header: expected digit for ") + field +
                             " at byte " + std::to_string(pos));
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1000000000L)
                throw ParseError(std::string("malformed header: ") + field +
                                 " out of range at byte " + std::to_string(pos));
            ++pos;
        }
        return v;
    }
};

} // namespace detail

/// Read a PGM file (binary P5 or ASCII P2, maxval <= 65535) and scale
/// intensities to [0,1] by dividing by maxval.
inline Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open PGM file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 2)
        throw ParseError("truncated PGM header at byte 0 in " + path);
    const bool binary = bytes[0] == 'P' && bytes[1] == '5';
    const bool ascii = bytes[0] == 'P' && bytes[1] == '2';
    if (!binary && !ascii)
        throw ParseError("unsupported magic number '" + bytes.substr(0, 2) +
                         "' at byte 0 in " + path);

    detail::PgmCursor cur{bytes, 2};
    const long w = cur.read_uint("width");
    const long h = cur.read_uint("height");
    const long maxval = cur.read_uint("maxval");
    if (w <= 0 || h <= 0)
        throw ParseError("malformed header: nonpositive dimensions at byte " +
                         std::to_string(cur.pos) + " in " + path);
    if (maxval <= 0 || maxval > 65535)
        throw ParseError("malformed header: maxval " + std::to_string(maxval) +
                         " out of range at byte " + std::to_string(cur.pos) + " in " + path);

    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    Image img(static_cast<int>(w), static_cast<int>(h));
    const double scale = 1.0 / static_cast<double>(maxval);

    if (binary) {
        // Exactly one whitespace byte separates maxval from the raster.
        if (cur.eof())
            throw ParseError("truncated payload: no raster after header at byte " +
                             std::to_string(cur.pos) + " in " + path);
        ++cur.pos;
        const int bytes_per_sample = maxval > 255 ? 2 : 1;
        const std::size_t need = n * static_cast<std::size_t>(bytes_per_sample);
        if (bytes.size() - cur.pos < need)
            throw ParseError("truncated payload: need " + std::to_string(need) +
                             " raster bytes, have " + std::to_string(bytes.size() - cur.pos) +
                             " at byte " + std::to_string(cur.pos) + " in " + path);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + cur.pos;
        for (std::size_t i = 0; i < n; ++i) {
            long v = bytes_per_sample == 1
                         ? static_cast<long>(p[i])
                         : (static_cast<long>(p[2 * i]) << 8) | static_cast<long>(p[2 * i + 1]);
            img.data[i] = static_cast<double>(v) * scale;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const long v = cur.read_uint("sample");
            if (v > maxval)
                throw ParseError("sample value " + std::to_string(v) +
                                 " exceeds maxval at byte " + std::to_string(cur.pos) +
                                 " in " + path);
            img.data[i] = static_cast<double>(v) * scale;
        }
    }
    return img;
}

/// Write a binary P5 PGM with maxval 255. Intensities are clamped to
/// [0,1] and rounded to the nearest integer in 0..255.
inline void write_pgm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open file for writing: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raster(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        raster[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raster.data()),
              static_cast<std::streamsize>(raster.size()));
    if (!out) throw Error("failed writing PGM payload: " + path);
}

/// Peak signal-to-noise ratio in dB with peak 1.0. Identical images give
/// +infinity rather than an error so traces on noiseless cases stay
/// well-formed.
inline double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionError("psnr: image dimensions differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

/// Add i.i.d. zero-mean Gaussian noise with standard deviation sigma
/// (peak-1 units). Deterministic for a fixed seed. The result is not
/// clamped.
inline Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw Error("add_gaussian_noise: sigma must be nonnegative");
    Image out = img;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto& v : out.data) v += gauss(rng);
    return out;
}

/// Fill unobserved pixels of y. Unobserved pixels start at the mean of
/// the observed ones; repeated 5x5 median passes (windows clipped at the
/// borders) then rewrite only the originally-unobserved pixels until no
/// pixel moves by more than 1e-6 or 20 passes elapse. Observed pixels are
/// never modified.
inline Image median_fill_init(const Image& y, const Mask& mask) {
    if (mask.size() != y.data.size())
        throw DimensionError("median_fill_init: mask length does not match image");
    double observed_sum = 0.0;
    std::size_t observed_count = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            observed_sum += y.data[i];
            ++observed_count;
        }
    }
    if (observed_count == 0) throw Error("median_fill_init: mask has no observed pixels");

    Image cur = y;
    const double mean = observed_sum / static_cast<double>(observed_count);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) cur.data[i] = mean;
    if (observed_count == mask.size()) return cur;

    const int W = y.width, H = y.height;
    std::vector<double> window;
    window.reserve(25);
    for (int pass = 0; pass < 20; ++pass) {
        Image next = cur;
        double max_change = 0.0;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                if (mask[static_cast<std::size_t>(r) * W + c]) continue;
                window.clear();
                for (int rr = std::max(0, r - 2); rr <= std::min(H - 1, r + 2); ++rr)
                    for (int cc = std::max(0, c - 2); cc <= std::min(W - 1, c + 2); ++cc)
                        window.push_back(cur.at(rr, cc));
                std::sort(window.begin(), window.end());
                const std::size_t k = window.size();
                const double med = (k % 2 == 1)
                                       ? window[k / 2]
                                       : 0.5 * (window[k / 2 - 1] + window[k / 2]);
                max_change = std::max(max_change, std::abs(med - next.at(r, c)));
                next.at(r, c) = med;
            }
        }
        cur = std::move(next);
        if (max_change <= 1e-6) break;
    }
    return cur;
}

/// Masks travel as PGM: 255 = observed, 0 = unobserved. Any nonzero
/// sample reads back as observed.
inline void write_mask_pgm(const Mask& mask, int width, int height, const std::string& path) {
    if (mask.size() != static_cast<std::size_t>(width) * height)
        throw DimensionError("write_mask_pgm: mask length does not match dimensions");
    Image img(width, height);
    for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 1.0 : 0.0;
    write_pgm(img, path);
}

inline Mask read_mask_pgm(const std::string& path, int* width = nullptr, int* height = nullptr) {
    const Image img = read_pgm(path);
    Mask mask(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) mask[i] = img.data[i] > 0.0 ? 1 : 0;
    if (width) *width = img.width;
    if (height) *height = img.height;
    return mask;
}

/// Nearest-neighbor resample to new dimensions.
inline Image resize_nearest(const Image& img, int new_w, int new_h) {
    if (new_w <= 0 || new_h <= 0) throw Error("resize_nearest: dimensions must be positive");
    Image out(new_w, new_h);
    for (int r = 0; r < new_h; ++r) {
        const int sr = std::min(img.height - 1, r * img.height / new_h);
        for (int c = 0; c < new_w; ++c) {
            const int sc = std::min(img.width - 1, c * img.width / new_w);
            out.at(r, c) = img.at(sr, sc);
        }
    }
    return out;
}

/// Integer-factor nearest-neighbor upsample (pixel replication).
inline Image upsample_nearest(const Image& img, int factor) {
    if (factor < 1) throw Error("upsample_nearest: factor must be >= 1");
    Image out(img.width * factor, img.height * factor);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = img.at(r / factor, c / factor);
    return out;
}

} // namespace pnpista

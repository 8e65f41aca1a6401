// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "pnpista/nlm.hpp"
#include "pnpista/spectral.hpp"
#include "test_support.hpp"

using namespace pnpista;

TEST_CASE("constant guide gives uniform box weights") {
    const Image guide(6, 6, 0.42);
    const NlmParams params{1, 2, 0.3};
    const DenoiserMatrix W = build_nlm(guide, params);

    for (int i = 0; i < W.size(); ++i) {
        const auto window = W.window(i);
        const auto weights = W.row_weights(i);
        const double expected = 1.0 / static_cast<double>(window.size());
        for (double w : weights) REQUIRE(w == Catch::Approx(expected).margin(1e-14));
    }
}

TEST_CASE("rows are stochastic with strictly positive window weights") {
    const Image guide = testsup::random_image(9, 7, 31);
    const DenoiserMatrix W = build_nlm(guide, {2, 3, 0.15});
    for (int i = 0; i < W.size(); ++i) {
        double sum = 0.0;
        for (double w : W.row_weights(i)) {
            REQUIRE(w > 0.0);
            sum += w;
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);
        // window contains its center
        const auto window = W.window(i);
        REQUIRE(std::binary_search(window.begin(), window.end(),
                                   static_cast<std::uint32_t>(i)));
    }
}

TEST_CASE("kernel matches the quadratic brute-force oracle") {
    const Image guide = testsup::random_image(8, 8, 32);
    const NlmParams params{1, 2, 0.2};
    const DenoiserMatrix W = build_nlm(guide, params);
    const DenseMatrix K = testsup::brute_force_nlm_kernel(guide, params);

    for (int i = 0; i < W.size(); ++i) {
        const auto window = W.window(i);
        const auto weights = W.row_weights(i);
        const double d = W.kernel_row_sum(i);
        // reconstruct stored kernel entries K_ij = D_ii * W_ij
        double brute_row_sum = 0.0;
        for (int j = 0; j < W.size(); ++j) brute_row_sum += K(i, j);
        REQUIRE(std::abs(d - brute_row_sum) <= 1e-12 * brute_row_sum);
        for (std::size_t k = 0; k < window.size(); ++k) {
            const double kij = d * weights[k];
            REQUIRE(std::abs(kij - K(i, static_cast<int>(window[k]))) <= 1e-12);
        }
        // entries outside the window are zero in the oracle
        std::set<std::uint32_t> in(window.begin(), window.end());
        for (int j = 0; j < W.size(); ++j)
            if (!in.count(static_cast<std::uint32_t>(j))) REQUIRE(K(i, j) == 0.0);
    }
}

TEST_CASE("kernel symmetry holds over stored entries") {
    const Image guide = testsup::random_image(10, 6, 33);
    const DenoiserMatrix W = build_nlm(guide, {3, 4, 0.1});
    double max_asym = 0.0;
    for (int i = 0; i < W.size(); ++i) {
        const auto window = W.window(i);
        const auto weights = W.row_weights(i);
        for (std::size_t k = 0; k < window.size(); ++k) {
            const int j = static_cast<int>(window[k]);
            const double kij = W.kernel_row_sum(i) * weights[k];
            // locate i in row j
            const auto wj = W.window(j);
            const auto pos = std::lower_bound(wj.begin(), wj.end(),
                                              static_cast<std::uint32_t>(i));
            REQUIRE((pos != wj.end() && *pos == static_cast<std::uint32_t>(i)));
            const double kji =
                W.kernel_row_sum(j) * W.row_weights(j)[pos - wj.begin()];
            max_asym = std::max(max_asym, std::abs(kij - kji));
        }
    }
    CHECK(max_asym <= 1e-12);
}

TEST_CASE("window geometry and membership symmetry") {
    const Image guide = testsup::random_image(8, 8, 34);
    const DenoiserMatrix W = build_nlm(guide, {1, 1, 0.2});

    CHECK(W.window(3 * 8 + 4).size() == 9); // interior pixel, S=1
    CHECK(W.window(0).size() == 4);         // corner clipped

    for (int i = 0; i < W.size(); ++i) {
        const auto wi = W.window(i);
        REQUIRE(std::is_sorted(wi.begin(), wi.end()));
        for (auto j : wi) {
            const auto wj = W.window(static_cast<int>(j));
            REQUIRE(std::binary_search(wj.begin(), wj.end(), static_cast<std::uint32_t>(i)));
        }
    }
    CHECK_THROWS_AS(W.window(-1), Error);
    CHECK_THROWS_AS(W.window(64), Error);
}

TEST_CASE("apply preserves constants and extracts columns") {
    const Image guide = testsup::random_image(8, 8, 35);
    const DenoiserMatrix W = build_nlm(guide, {1, 2, 0.25});

    const std::vector<double> ones(64, 0.77);
    const auto out = W.apply(ones);
    for (double v : out) REQUIRE(v == Catch::Approx(0.77).margin(1e-12));

    // e_i through the map reads off column i: out_j = W_ji.
    std::vector<double> e(64, 0.0);
    const int i = 27;
    e[i] = 1.0;
    const auto col = W.apply(e);
    const DenseMatrix D = W.dense();
    for (int j = 0; j < 64; ++j) {
        REQUIRE(col[j] == Catch::Approx(D(j, i)).margin(1e-15));
        const auto wj = W.window(j);
        const bool in_window = std::binary_search(wj.begin(), wj.end(),
                                                  static_cast<std::uint32_t>(i));
        REQUIRE((col[j] != 0.0) == in_window);
    }

    CHECK_THROWS_AS(W.apply(std::vector<double>(65, 0.0)), DimensionError);
}

TEST_CASE("sparse apply matches the dense product") {
    const Image guide = testsup::random_image(16, 16, 36);
    const DenoiserMatrix W = build_nlm(guide, {2, 3, 0.2});
    const DenseMatrix D = W.dense();
    const auto x = testsup::random_vector(256, 37, -1.0, 1.0);
    CHECK(norm2_diff(W.apply(x), matvec(D, x)) < 1e-12);
    CHECK(norm2_diff(W.apply_transpose(x), matvec(transpose(D), x)) < 1e-12);
}

TEST_CASE("dense form matches an independent box filter for constant guides") {
    const int side = 7;
    const Image guide(side, side, 0.5);
    const int S = 2;
    const DenoiserMatrix W = build_nlm(guide, {1, S, 0.3});
    const DenseMatrix D = W.dense();

    DenseMatrix box(side * side, side * side, 0.0);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            const int i = r * side + c;
            int count = 0;
            for (int rr = std::max(0, r - S); rr <= std::min(side - 1, r + S); ++rr)
                for (int cc = std::max(0, c - S); cc <= std::min(side - 1, c + S); ++cc)
                    ++count;
            for (int rr = std::max(0, r - S); rr <= std::min(side - 1, r + S); ++rr)
                for (int cc = std::max(0, c - S); cc <= std::min(side - 1, c + S); ++cc)
                    box(i, rr * side + cc) = 1.0 / count;
        }
    CHECK(max_abs_diff(D, box) <= 1e-12);

    // sparsity pattern equals the windows exactly
    for (int i = 0; i < side * side; ++i) {
        const auto wi = W.window(i);
        std::set<std::uint32_t> in(wi.begin(), wi.end());
        for (int j = 0; j < side * side; ++j)
            REQUIRE((D(i, j) > 0.0) == (in.count(static_cast<std::uint32_t>(j)) > 0));
    }
}

TEST_CASE("denoiser spectrum: dominant eigenvalue 1, spectral norm >= 1") {
    const Image guide = testsup::random_image(8, 8, 38);
    const DenoiserMatrix W = build_nlm(guide, {1, 2, 0.2});
    const double rho = spectral_radius(W.dense());
    CHECK(rho == Catch::Approx(1.0).margin(1e-8));
    CHECK(largest_singular_value(W) >= 1.0 - 1e-10);
}

TEST_CASE("triplet dump is 1-based i j w") {
    const DenoiserMatrix W = make_identity_denoiser(3);
    std::ostringstream os;
    W.dump_triplets(os);
    CHECK(os.str() == "1 1 1\n2 2 1\n3 3 1\n");
}

TEST_CASE("build_nlm input validation") {
    CHECK_THROWS_AS(build_nlm(Image(4, 4, 0.1), NlmParams{1, 2, 0.0}), Error);
    CHECK_THROWS_AS(build_nlm(Image(4, 4, 0.1), NlmParams{1, 2, -1.0}), Error);
    CHECK_THROWS_AS(build_nlm(Image(4, 4, 0.1), NlmParams{-1, 2, 0.1}), Error);
    CHECK_THROWS_AS(build_nlm(Image(4, 4, 0.1), NlmParams{1, 0, 0.1}), Error);
    Image empty;
    CHECK_THROWS_AS(build_nlm(empty, NlmParams{1, 2, 0.1}), Error);
}

TEST_CASE("from_rows validation and identity denoiser") {
    const DenoiserMatrix I3 = make_identity_denoiser(3);
    const auto out = I3.apply({1.0, 2.0, 3.0});
    CHECK(out == std::vector<double>{1.0, 2.0, 3.0});

    // missing diagonal
    CHECK_THROWS_AS(DenoiserMatrix::from_rows(2, {{1}, {1}}, {{1.0}, {1.0}}), Error);
    // non-stochastic row
    CHECK_THROWS_AS(DenoiserMatrix::from_rows(1, {{0}}, {{0.5}}), Error);
    // nonpositive weight
    CHECK_THROWS_AS(DenoiserMatrix::from_rows(1, {{0}}, {{0.0}}), Error);
}

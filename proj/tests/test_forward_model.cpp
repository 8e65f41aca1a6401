// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pnpista/forward_model.hpp"
#include "test_support.hpp"

using namespace pnpista;

namespace {

double adjoint_identity_error(const LinearOperator& op, std::uint64_t seed) {
    const auto x = testsup::random_vector(op.input_dim(), seed, -1.0, 1.0);
    const auto z = testsup::random_vector(op.output_dim(), seed + 1, -1.0, 1.0);
    const double lhs = dot(op.apply(x), z);
    const double rhs = dot(x, op.apply_adjoint(z));
    return std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

} // namespace

TEST_CASE("inpainting selects observed coordinates") {
    Mask mask = {1, 0, 1, 0};
    const LinearOperator op = make_inpainting(mask);
    CHECK(op.output_dim() == 2);

    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    CHECK(op.apply(x) == std::vector<double>{1.0, 3.0});
    CHECK(op.apply_gram(x) == std::vector<double>{1.0, 0.0, 3.0, 0.0});
    CHECK(op.apply_adjoint({5.0, 6.0}) == std::vector<double>{5.0, 0.0, 6.0, 0.0});

    const DenseMatrix G = op.dense_gram();
    CHECK(G(0, 0) == 1.0);
    CHECK(G(1, 1) == 0.0);
    CHECK(G(2, 2) == 1.0);
    CHECK(G(3, 3) == 0.0);
    double off = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) off += std::abs(G(i, j));
    CHECK(off == 0.0);
}

TEST_CASE("fully observed inpainting gram is the identity") {
    const Mask mask(12, 1);
    const LinearOperator op = make_inpainting(mask);
    const auto x = testsup::random_vector(12, 4);
    CHECK(op.apply_gram(x) == x);
}

TEST_CASE("inpainting rejects an empty observed set") {
    CHECK_THROWS_AS(make_inpainting(Mask(8, 0)), Error);
    CHECK_THROWS_AS(make_inpainting(Mask{}), Error);
}

TEST_CASE("deblurring with a delta PSF is the identity") {
    const LinearOperator op = make_deblurring(delta_psf(), 6, 4);
    const auto x = testsup::random_vector(op.input_dim(), 5);
    CHECK(op.apply(x) == x);
    CHECK(op.apply_gram(x) == x);
}

TEST_CASE("uniform PSF preserves constants") {
    const LinearOperator op = make_deblurring(uniform_psf(3, 3), 8, 8);
    const std::vector<double> c(64, 0.37);
    const auto out = op.apply(c);
    for (double v : out) REQUIRE(v == Catch::Approx(0.37).margin(1e-14));
}

TEST_CASE("deblurring adjoint identity") {
    const LinearOperator op = make_deblurring(uniform_psf(3, 5), 16, 16);
    for (std::uint64_t seed : {1u, 2u, 3u}) REQUIRE(adjoint_identity_error(op, seed) < 1e-12);
}

TEST_CASE("PSF validation") {
    Psf neg{2, 2, {0.5, -0.1, 0.3, 0.3}};
    CHECK_THROWS_AS(make_deblurring(neg, 8, 8), Error);

    CHECK_THROWS_AS(make_deblurring(uniform_psf(9, 9), 8, 8), Error); // larger than image

    Psf zero{1, 1, {0.0}};
    CHECK_THROWS_AS(make_deblurring(zero, 8, 8), Error);

    Psf unnormalized{1, 3, {1.0, 2.0, 1.0}};
    const LinearOperator op = make_deblurring(unnormalized, 8, 8);
    const std::vector<double> c(64, 1.0);
    const auto out = op.apply(c); // taps normalized to unit sum at construction
    CHECK(out[10] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("superresolution degenerate and decimation cases") {
    SECTION("factor 1 with delta PSF is the identity") {
        const LinearOperator op = make_superresolution(delta_psf(), 1, 6, 6);
        const auto x = testsup::random_vector(36, 6);
        CHECK(op.apply(x) == x);
    }
    SECTION("factor 2 with delta PSF picks the top-left phase") {
        const LinearOperator op = make_superresolution(delta_psf(), 2, 4, 4);
        std::vector<double> x(16);
        for (int i = 0; i < 16; ++i) x[i] = i;
        CHECK(op.apply(x) == std::vector<double>{0.0, 2.0, 8.0, 10.0});
    }
    SECTION("non-divisible factor rejected") {
        CHECK_THROWS_AS(make_superresolution(delta_psf(), 3, 8, 8), Error);
    }
}

TEST_CASE("dense gram matches the explicit product at small size") {
    const LinearOperator op = make_superresolution(uniform_psf(3, 3), 2, 8, 8);
    const DenseMatrix A = op.dense_matrix();
    const DenseMatrix G = op.dense_gram();
    const DenseMatrix AtA = matmul(transpose(A), A);
    CHECK(max_abs_diff(G, AtA) <= 1e-12);
}

TEST_CASE("operator applications match dense products on random instances") {
    const Image guide = testsup::random_image(8, 8, 9);
    const Mask mask = testsup::random_mask(8, 8, 0.5, 10);
    const std::vector<LinearOperator> ops = {
        make_inpainting(mask),
        make_deblurring(uniform_psf(3, 3), 8, 8),
        make_superresolution(uniform_psf(3, 3), 2, 8, 8),
    };
    for (const auto& op : ops) {
        const DenseMatrix A = op.dense_matrix();
        const DenseMatrix G = op.dense_gram();
        const auto x = testsup::random_vector(op.input_dim(), 11, -1.0, 1.0);
        const auto z = testsup::random_vector(op.output_dim(), 12, -1.0, 1.0);

        const auto ax = op.apply(x);
        const auto ax_dense = matvec(A, x);
        REQUIRE(norm2_diff(ax, ax_dense) < 1e-12);

        const auto atz = op.apply_adjoint(z);
        const auto atz_dense = matvec(transpose(A), z);
        REQUIRE(norm2_diff(atz, atz_dense) < 1e-12);

        const auto gx = op.apply_gram(x);
        const auto gx_dense = matvec(G, x);
        REQUIRE(norm2_diff(gx, gx_dense) < 1e-12);

        // Gram consistency with the two-step application.
        REQUIRE(norm2_diff(gx, op.apply_adjoint(op.apply(x))) < 1e-12);

        // Linearity at zero.
        const std::vector<double> zero(op.input_dim(), 0.0);
        for (double v : op.apply(zero)) REQUIRE(v == 0.0);
        for (double v : op.apply_gram(zero)) REQUIRE(v == 0.0);

        // Entrywise nonnegativity of the forward matrix.
        for (int i = 0; i < A.rows(); ++i)
            for (int j = 0; j < A.cols(); ++j) REQUIRE(A(i, j) >= 0.0);

        // Adjoint identity for every kind.
        REQUIRE(adjoint_identity_error(op, 21) < 1e-12);

        // Gram symmetry.
        CHECK(max_abs_diff(G, transpose(G)) <= 1e-14);

        CHECK_THROWS_AS(op.apply(std::vector<double>(op.input_dim() + 1, 0.0)),
                        DimensionError);
    }
}

TEST_CASE("dense materialization respects the cap") {
    const Mask mask(128, 1);
    const LinearOperator op = make_inpainting(mask);
    CHECK_THROWS_WITH(op.dense_matrix(64), Catch::Matchers::ContainsSubstring("cap"));
    CHECK_THROWS_AS(op.dense_gram(64), Error);
    CHECK(op.dense_matrix(128).rows() == 128);
}

TEST_CASE("PSF text format loads") {
    const auto path = (std::filesystem::temp_directory_path() / "psf.txt").string();
    {
        std::ofstream out(path);
        out << "2 3\n0.1 0.2 0.1\n0.2 0.3 0.1\n";
    }
    const Psf psf = load_psf(path);
    CHECK(psf.rows == 2);
    CHECK(psf.cols == 3);
    CHECK(psf.taps[4] == 0.3);

    {
        std::ofstream out(path);
        out << "2 3\n0.1 0.2\n";
    }
    CHECK_THROWS_AS(load_psf(path), ParseError);
}

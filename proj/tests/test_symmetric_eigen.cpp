#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "listflow/symmetric_eigen.hpp"

using namespace listflow;

namespace {

DenseMatrix random_symmetric(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    DenseMatrix a(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) a(i, j) = a(j, i) = N(rng);
    return a;
}

void expect_decomposition(const DenseMatrix& a, const SymmetricEigen& e, double tol) {
    const int n = a.size();
    const double scale = std::max(1.0, a.max_abs());
    for (int k = 0; k < n; ++k) {
        const auto av = a.apply(e.vectors[k]);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(av[i], e.values[k] * e.vectors[k][i], tol * scale * n);
        for (int l = k; l < n; ++l) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += e.vectors[k][i] * e.vectors[l][i];
            EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, tol * n);
        }
        if (k > 0) {
            EXPECT_LE(e.values[k - 1], e.values[k]);
        }
    }
}

} // namespace

TEST(SymmetricEigen, MatchesEigenOnRandomMatrices) {
    for (int n : {2, 3, 7, 40, 129}) {
        const auto a = random_symmetric(n, 11 + n);
        const auto e = symmetric_eigen(a);
        Eigen::MatrixXd m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) = a(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
        ASSERT_EQ(ref.info(), Eigen::Success);
        for (int k = 0; k < n; ++k) EXPECT_NEAR(e.values[k], ref.eigenvalues()(k), 1e-12 * n);
        expect_decomposition(a, e, 1e-13);
    }
}

TEST(SymmetricEigen, DiagonalAndDegenerateInputs) {
    DenseMatrix d(5);
    const double diag[] = {3.0, -1.0, 2.0, 2.0, 0.5};
    for (int i = 0; i < 5; ++i) d(i, i) = diag[i];
    const auto e = symmetric_eigen(d);
    const double sorted[] = {-1.0, 0.5, 2.0, 2.0, 3.0};
    for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(e.values[k], sorted[k]);
    expect_decomposition(d, e, 1e-15);

    // periodic second-difference matrix: eigenvalues 2 - 2 cos(2 pi j / n), doubly degenerate
    const int n = 32;
    DenseMatrix l(n);
    for (int i = 0; i < n; ++i) {
        l(i, i) = 2.0;
        l(i, (i + 1) % n) = l((i + 1) % n, i) = -1.0;
    }
    const auto el = symmetric_eigen(l);
    EXPECT_NEAR(el.values[0], 0.0, 1e-13);
    const double v1 = 2.0 - 2.0 * std::cos(2.0 * M_PI / n);
    EXPECT_NEAR(el.values[1], v1, 1e-13);
    EXPECT_NEAR(el.values[2], v1, 1e-13);
    expect_decomposition(l, el, 1e-14);
}

TEST(SymmetricEigen, OneByOneAndEmpty) {
    DenseMatrix one(1);
    one(0, 0) = 4.5;
    const auto e = symmetric_eigen(one);
    ASSERT_EQ(e.values.size(), 1u);
    EXPECT_EQ(e.values[0], 4.5);
    EXPECT_TRUE(symmetric_eigen(DenseMatrix(0)).values.empty());
}

TEST(SymmetricEigen, IterationCapRaisesNoConvergence) {
    const auto a = random_symmetric(12, 3);
    try {
        symmetric_eigen(a, 0);
        FAIL() << "expected NoConvergence";
    } catch (const Error& err) {
        EXPECT_EQ(err.kind(), ErrorKind::NoConvergence);
    }
}

TEST(DenseMatrix, SymmetryCheck) {
    auto a = random_symmetric(6, 1);
    EXPECT_TRUE(a.is_symmetric());
    a(1, 2) += 1e-9;
    EXPECT_FALSE(a.is_symmetric());
}

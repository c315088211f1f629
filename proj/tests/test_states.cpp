#include "qpgeo/states.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <vector>

using namespace qpgeo;
using qpgeo::testing::random_state;

namespace {

HermitianOperator z_op() { return HermitianOperator(pauli_dense(PauliString("Z"))); }

DensityOperator diag_state(std::initializer_list<double> p, int n) {
    RealVector v(static_cast<Eigen::Index>(p.size()));
    Eigen::Index k = 0;
    for (const double x : p) {
        v(k++) = x;
    }
    return {v.cast<cplx>().asDiagonal().toDenseMatrix(), n};
}

double log_log_slope(const std::vector<double> &x, const RealVector &y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double lx = std::log(x[k]);
        const double ly = std::log(y(static_cast<Eigen::Index>(k)));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace

TEST(DensityOperator, ValidatesInvariants) {
    EXPECT_THROW(DensityOperator(ComplexMatrix::Identity(2, 2), 1), Error);
    ComplexMatrix neg = ComplexMatrix::Zero(2, 2);
    neg(0, 0) = 1.5;
    neg(1, 1) = -0.5;
    EXPECT_THROW(DensityOperator(neg, 1), Error);
    EXPECT_THROW(DensityOperator(ComplexMatrix::Identity(2, 2) / 2.0, 2), Error);
    EXPECT_NO_THROW(DensityOperator::maximally_mixed(3));
}

TEST(Gibbs, InfiniteTemperatureIsMaximallyMixed) {
    const DensityOperator rho = gibbs_state(z_op(), 0.0, 1);
    EXPECT_LT((rho.matrix() - ComplexMatrix::Identity(2, 2) / 2.0).norm(), 1e-15);
}

TEST(Gibbs, SingleQubitClosedForm) {
    const DensityOperator rho = gibbs_state(z_op(), 1.0, 1);
    EXPECT_NEAR(rho.matrix()(1, 1).real(), std::exp(1.0) / (2.0 * std::cosh(1.0)), 1e-15);
    EXPECT_NEAR(rho.matrix()(1, 1).real(), 0.880797, 1e-6);
    EXPECT_NEAR(log_partition(z_op(), 1.0), std::log(2.0 * std::cosh(1.0)), 1e-14);
}

TEST(Gibbs, TwoQubitTfimAgainstDirectEigendecomposition) {
    const ComplexMatrix h = -pauli_dense(PauliString("ZZ")) - pauli_dense(PauliString("XI")) -
                            pauli_dense(PauliString("IX"));
    const DensityOperator rho = gibbs_state(HermitianOperator(h), 2.0, 2);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    RealVector w = (-2.0 * es.eigenvalues().array()).exp();
    w /= w.sum();
    const ComplexMatrix ref = es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
    EXPECT_LT((rho.matrix() - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(rho.matrix().trace().real(), 1.0, 1e-12);
    EXPECT_LT((rho.matrix() * h - h * rho.matrix()).norm(), 1e-10);
}

TEST(Gibbs, RejectsNegativeBeta) { EXPECT_THROW(gibbs_state(z_op(), -1.0, 1), Error); }

TEST(Entropy, PureMixedAndDiagonal) {
    Rng rng(1);
    const ComplexVector psi = qpgeo::testing::random_unit_vector(4, rng);
    EXPECT_NEAR(von_neumann_entropy(DensityOperator::pure(psi, 2)), 0.0, 1e-10);
    EXPECT_NEAR(von_neumann_entropy(DensityOperator::maximally_mixed(3)), 3.0 * std::log(2.0), 1e-12);
    const double expected = -0.25 * std::log(0.25) - 0.75 * std::log(0.75);
    EXPECT_NEAR(von_neumann_entropy(diag_state({0.25, 0.75}, 1)), expected, 1e-12);
    EXPECT_NEAR(expected, 0.562335, 1e-6);
}

TEST(RelativeEntropy, SelfIsZero) {
    Rng rng(2);
    for (int t = 0; t < 5; ++t) {
        const DensityOperator rho = random_state(2, rng);
        EXPECT_NEAR(relative_entropy(rho, rho), 0.0, 1e-10);
    }
}

TEST(RelativeEntropy, CommutingClosedForm) {
    const double p = std::exp(1.0) / (2.0 * std::cosh(1.0));
    const double expected = -std::log(2.0) - 0.5 * std::log(p * (1.0 - p));
    EXPECT_NEAR(relative_entropy(DensityOperator::maximally_mixed(1), gibbs_state(z_op(), 1.0, 1)), expected,
                1e-12);
}

TEST(RelativeEntropy, NonNegativeOnRandomPairs) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + static_cast<int>(t % 2);
        EXPECT_GE(relative_entropy(random_state(n, rng), random_state(n, rng)), -1e-10);
    }
}

TEST(RelativeEntropy, MatchesIndependentFormula) {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        const DensityOperator rho = random_state(2, rng);
        const DensityOperator sigma = random_state(2, rng);
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sigma.matrix());
        const ComplexMatrix log_sigma = es.eigenvectors() *
                                        es.eigenvalues().array().log().matrix().cast<cplx>().asDiagonal() *
                                        es.eigenvectors().adjoint();
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> er(rho.matrix());
        double s = 0.0;
        for (Eigen::Index k = 0; k < 4; ++k) {
            s -= er.eigenvalues()(k) * std::log(er.eigenvalues()(k));
        }
        const double ref = -s - (rho.matrix() * log_sigma).trace().real();
        EXPECT_NEAR(relative_entropy(rho, sigma), ref, 1e-10);
    }
}

TEST(RelativeEntropy, SingularSigmaErrors) {
    try {
        relative_entropy(DensityOperator::maximally_mixed(1), diag_state({1.0, 0.0}, 1));
        FAIL();
    } catch (const Error &e) {
        EXPECT_STREQ(e.what(), "unsupported data state");
    }
}

TEST(Fidelity, BasicCases) {
    Rng rng(5);
    const DensityOperator rho = random_state(2, rng);
    EXPECT_NEAR(fidelity(rho, rho), 1.0, 1e-10);

    const double bc = std::sqrt(0.2 * 0.5) + std::sqrt(0.8 * 0.5);
    EXPECT_NEAR(fidelity(diag_state({0.2, 0.8}, 1), diag_state({0.5, 0.5}, 1)), bc * bc, 1e-12);

    const ComplexVector a = qpgeo::testing::random_unit_vector(4, rng);
    const ComplexVector b = qpgeo::testing::random_unit_vector(4, rng);
    EXPECT_NEAR(fidelity(DensityOperator::pure(a, 2), DensityOperator::pure(b, 2)), std::norm(a.dot(b)), 1e-7);
}

TEST(Fidelity, SymmetricAndBounded) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const DensityOperator r = random_state(2, rng);
        const DensityOperator s = random_state(2, rng);
        const double f = fidelity(r, s);
        EXPECT_NEAR(f, fidelity(s, r), 1e-10);
        EXPECT_GE(f, 0.0);
        EXPECT_LT(f, 1.0 - 1e-8);
    }
}

TEST(SymmetryGap, ConstantPathIsZero) {
    Rng rng(7);
    const DensityOperator rho = random_state(1, rng);
    const std::vector<double> lambdas = {1e-3, 1e-2, 1e-1};
    const RealVector gaps = third_order_symmetry_gap([&](double) { return rho; }, lambdas);
    EXPECT_LT(gaps.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SymmetryGap, CubicScaling) {
    Rng rng = make_stream(1, "symmetry-gap");
    for (int t = 0; t < 5; ++t) {
        const int n = 1 + t % 2;
        const auto dim = static_cast<Eigen::Index>(dim_of(n));
        const ComplexMatrix k0 = qpgeo::testing::random_hermitian(dim, rng);
        ComplexMatrix v = qpgeo::testing::random_hermitian(dim, rng);
        v /= v.norm();
        const auto path = [&](double l) {
            return gibbs_state(HermitianOperator(k0 + l * v), 1.0, n);
        };
        std::vector<double> lambdas;
        for (int k = 0; k <= 8; ++k) {
            lambdas.push_back(1e-3 * std::pow(10.0, k / 4.0));
        }
        const RealVector gaps = third_order_symmetry_gap(path, lambdas);
        EXPECT_NEAR(log_log_slope(lambdas, gaps), 3.0, 0.1);
    }
}

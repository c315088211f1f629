#include "qpgeo/losses.hpp"
#include "qpgeo/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace qpgeo;
using qpgeo::testing::fd_gradient;
using qpgeo::testing::random_state;

namespace {

HermitianOperator random_h(int n, Rng &rng) {
    return HermitianOperator(qpgeo::testing::random_hermitian(static_cast<Eigen::Index>(dim_of(n)), rng));
}

double inf_err(const RealVector &a, const RealVector &b) { return (a - b).cwiseAbs().maxCoeff(); }

} // namespace

TEST(VqtLoss, ValueIsScaledRelativeEntropyMinusLogPartition) {
    // L = beta F = D(rho || sigma_beta) - ln Z_beta.
    Rng rng(51);
    for (int t = 0; t < 5; ++t) {
        const int n = 1 + t % 3;
        const QhbmModel model(n, 1);
        const RealVector omega = model.random_params(rng, 0.5);
        const HermitianOperator h = random_h(n, rng);
        const double beta = 0.8;
        const double expected = relative_entropy(qhbm_density(model, omega), gibbs_state(h, beta, n)) -
                                log_partition(h, beta);
        EXPECT_NEAR(vqt_loss(model, omega, h, beta).value, expected, 1e-10);
    }
}

TEST(VqtLoss, GradientMatchesFiniteDifferences) {
    Rng rng(52);
    for (int t = 0; t < 10; ++t) {
        const QhbmModel model(3, 1 + t % 2);
        const RealVector omega = model.random_params(rng, 0.5);
        const HermitianOperator h = random_h(3, rng);
        const auto f = [&](const RealVector &w) { return vqt_loss(model, w, h, 1.3).value; };
        const RealVector fd = fd_gradient(f, omega);
        const RealVector g = vqt_loss(model, omega, h, 1.3).gradient();
        EXPECT_LE(inf_err(g, fd), 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
}

TEST(VqtLoss, ShotGradientIsUnbiased) {
    const QhbmModel model(1, 1);
    Rng init(53);
    const RealVector omega = model.random_params(init, 0.6);
    const HermitianOperator h = random_h(1, init);
    const LossEvaluation exact = vqt_loss(model, omega, h, 1.0);
    Rng rng = make_stream(4, "measurement");
    RealVector mean = RealVector::Zero(model.n_params());
    double value = 0.0;
    const int reps = 2000;
    for (int r = 0; r < reps; ++r) {
        const LossEvaluation s = vqt_loss(model, omega, h, 1.0, EvalMode::sampled(70, rng));
        mean += s.gradient();
        value += s.value;
        EXPECT_EQ(s.shots_used, 70u);
    }
    EXPECT_LT(inf_err(mean / reps, exact.gradient()), 0.03);
    EXPECT_NEAR(value / reps, exact.value, 0.03);
}

TEST(VqtLoss, RejectsNegativeBetaAndWrongDimension) {
    const QhbmModel model(2, 1);
    const RealVector omega = RealVector::Zero(model.n_params());
    Rng rng(54);
    EXPECT_THROW(vqt_loss(model, omega, random_h(2, rng), -1.0), Error);
    EXPECT_THROW(vqt_loss(model, omega, random_h(1, rng), 1.0), Error);
}

TEST(QmhlLoss, ValueIsRelativeEntropyPlusEntropy) {
    // L = D(sigma || rho) + S(sigma).
    Rng rng(55);
    for (int t = 0; t < 5; ++t) {
        const int n = 1 + t % 3;
        const QhbmModel model(n, 1);
        const RealVector omega = model.random_params(rng, 0.5);
        const DensityOperator sigma = random_state(n, rng);
        const double expected = relative_entropy(sigma, qhbm_density(model, omega)) + von_neumann_entropy(sigma);
        EXPECT_NEAR(qmhl_loss(model, omega, sigma).value, expected, 1e-10);
    }
}

TEST(QmhlLoss, GradientMatchesFiniteDifferences) {
    Rng rng(56);
    for (int t = 0; t < 10; ++t) {
        const QhbmModel model(3, 1 + t % 2);
        const RealVector omega = model.random_params(rng, 0.5);
        const DensityOperator sigma = random_state(3, rng);
        const auto f = [&](const RealVector &w) { return qmhl_loss(model, w, sigma).value; };
        const RealVector fd = fd_gradient(f, omega);
        EXPECT_LE(inf_err(qmhl_loss(model, omega, sigma).gradient(), fd),
                  1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
}

TEST(QmhlLoss, ShotGradientIsUnbiased) {
    const QhbmModel model(1, 1);
    Rng init(57);
    const RealVector omega = model.random_params(init, 0.6);
    const DataState data(random_state(1, init));
    const QhbmPoint pt = evaluate(model, omega);
    const LossEvaluation exact = qmhl_loss(model, pt, data);
    Rng rng = make_stream(5, "measurement");
    RealVector mean = RealVector::Zero(model.n_params());
    const int reps = 2000;
    for (int r = 0; r < reps; ++r) {
        mean += qmhl_loss(model, pt, data, EvalMode::sampled(70, rng)).gradient();
    }
    EXPECT_LT(inf_err(mean / reps, exact.gradient()), 0.03);
}

TEST(QmhlLoss, OnlineThetaGradientIsUnbiased) {
    const QhbmModel model(2, 1);
    Rng rng(58);
    const RealVector omega = model.random_params(rng, 0.6);
    const DataState data(random_state(2, rng));
    const QhbmPoint pt = evaluate(model, omega);
    RealVector mean = RealVector::Zero(model.n_theta());
    const int reps = 20000;
    for (int r = 0; r < reps; ++r) {
        mean += qmhl_theta_gradient_online(model, pt, data.sample(rng), rng);
    }
    EXPECT_LT(inf_err(mean / reps, qmhl_loss(model, pt, data).grad_theta), 0.03);
}

TEST(QmhlLoss, PureDataStateIsFinite) {
    // Cross entropy needs only full-rank model states, not full-rank data.
    const QhbmModel model(1, 1);
    ComplexMatrix pure = ComplexMatrix::Zero(2, 2);
    pure(0, 0) = 1.0;
    const LossEvaluation l = qmhl_loss(model, RealVector::Zero(model.n_params()), DensityOperator(pure, 1));
    EXPECT_NEAR(l.value, std::log(2.0), 1e-12);
    EXPECT_TRUE(l.gradient().allFinite());
}

TEST(AnchorDivergence, ForwardValueAndGradient) {
    Rng rng(59);
    for (int t = 0; t < 4; ++t) {
        const QhbmModel model(2, 1 + t % 2);
        const RealVector anchor = model.random_params(rng, 0.5);
        const RealVector omega = model.random_params(rng, 0.5);
        const LossEvaluation d = relative_entropy_to_anchor_grad(model, omega, anchor);
        EXPECT_NEAR(d.value, relative_entropy(qhbm_density(model, omega), qhbm_density(model, anchor)), 1e-10);
        const auto f = [&](const RealVector &w) {
            return relative_entropy(qhbm_density(model, w), qhbm_density(model, anchor));
        };
        EXPECT_LT(inf_err(d.gradient(), fd_gradient(f, omega)), 1e-7);
        EXPECT_LT(relative_entropy_to_anchor_grad(model, anchor, anchor).gradient().cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(AnchorDivergence, ReverseValueAndGradient) {
    Rng rng(60);
    for (int t = 0; t < 4; ++t) {
        const QhbmModel model(2, 1 + t % 2);
        const RealVector anchor = model.random_params(rng, 0.5);
        const RealVector omega = model.random_params(rng, 0.5);
        const QhbmPoint a = evaluate(model, anchor);
        const LossEvaluation d = relative_entropy_from_anchor_grad(model, evaluate(model, omega), a);
        EXPECT_NEAR(d.value, relative_entropy(qhbm_density(model, anchor), qhbm_density(model, omega)), 1e-10);
        const auto f = [&](const RealVector &w) {
            return relative_entropy(qhbm_density(model, anchor), qhbm_density(model, w));
        };
        EXPECT_LT(inf_err(d.gradient(), fd_gradient(f, omega)), 1e-7);
    }
}

TEST(AnchorDivergence, HessianAtAnchorIsBkm) {
    // Both divergence directions have the BKM matrix as Hessian at the anchor.
    Rng rng(61);
    const QhbmModel model(2, 1);
    const RealVector anchor = model.random_params(rng, 0.5);
    const QhbmPoint a = evaluate(model, anchor);
    const RealMatrix bkm = bkm_info_qhbm(model, anchor).entries;
    const Eigen::Index d = model.n_params();
    const double h = 1e-5;
    RealMatrix fwd(d, d);
    RealMatrix rev(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        RealVector p = anchor;
        RealVector m = anchor;
        p(j) += h;
        m(j) -= h;
        fwd.col(j) = (relative_entropy_to_anchor_grad(model, p, anchor).gradient() -
                      relative_entropy_to_anchor_grad(model, m, anchor).gradient()) /
                     (2 * h);
        rev.col(j) = (relative_entropy_from_anchor_grad(model, evaluate(model, p), a).gradient() -
                      relative_entropy_from_anchor_grad(model, evaluate(model, m), a).gradient()) /
                     (2 * h);
    }
    EXPECT_LT((fwd - bkm).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((rev - bkm).cwiseAbs().maxCoeff(), 1e-6);
}

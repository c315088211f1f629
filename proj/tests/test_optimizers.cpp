#include "qpgeo/problems.hpp"
#include "qpgeo/targets.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace qpgeo;
using qpgeo::testing::random_vector;

namespace {

RealMatrix random_spd(Eigen::Index d, Rng &rng, double floor = 0.5) {
    RealMatrix a(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            a(i, j) = standard_normal(rng);
        }
    }
    return a * a.transpose() + floor * RealMatrix::Identity(d, d);
}

/// L = 1/2 (x - c)^T A (x - c) with metric A, as an optimizer problem.
Problem quadratic_problem(const RealMatrix &a, const RealVector &c) {
    Problem p;
    p.dim = a.rows();
    p.n_quantum_params = static_cast<std::size_t>(a.rows());
    p.loss = [a, c](const RealVector &x, const EvalMode &) {
        const RealVector d = x - c;
        return Objective{0.5 * d.dot(a * d), a * d, 0};
    };
    p.metric = [a](const RealVector &, MetricKind kind, const EvalMode &) { return make_information_matrix(a, kind); };
    return p;
}

double angle_deg(const RealVector &a, const RealVector &b) {
    const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

Problem small_vqt(int n, double beta, QhbmModel &model_out) {
    model_out = QhbmModel(n, 1);
    if (n == 1) {
        const HermitianOperator h(pauli_sum_dense({PauliString("X", -1.0), PauliString("Z", -0.5)}));
        return make_vqt_problem(model_out, h, beta, gibbs_state(h, beta, 1));
    }
    const TfimSpec spec{n, 1.0, 1.0};
    return make_vqt_problem(model_out, tfim_hamiltonian(spec), beta, tfim_gibbs_target(spec, beta));
}

} // namespace

TEST(QpngdStep, ZeroGradientLeavesParamsUnchanged) {
    Rng rng(70);
    const RealVector x = random_vector(4, rng);
    const RealVector out = qpngd_step(x, RealVector::Zero(4), random_spd(4, rng), 10.0, PinvPolicy{});
    EXPECT_EQ(out, x);
}

TEST(QpngdStep, NewtonOnQuadraticWithMatchingMetric) {
    Rng rng(71);
    const RealMatrix a = random_spd(5, rng);
    const RealVector c = random_vector(5, rng);
    const RealVector x = random_vector(5, rng);
    const RealVector out = qpngd_step(x, a * (x - c), a, 1.0, PinvPolicy{});
    EXPECT_LT((out - c).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(QpngdStep, IdentityMetricIsSgd) {
    Rng rng(72);
    const RealVector x = random_vector(6, rng);
    const RealVector g = random_vector(6, rng);
    const RealVector ngd = qpngd_step(x, g, RealMatrix::Identity(6, 6), 10.0, PinvPolicy{});
    EXPECT_LT((ngd - sgd_step(x, g, 0.1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(QpngdStep, TikhonovPolicyIsUsed) {
    const RealMatrix m = RealMatrix::Identity(2, 2);
    const RealVector x = RealVector::Zero(2);
    const RealVector g = RealVector::Ones(2);
    PinvPolicy tik;
    tik.kind = PinvPolicy::Kind::tikhonov;
    tik.tikhonov_eps = 1.0;
    EXPECT_NEAR(qpngd_step(x, g, m, 1.0, tik)(0), -0.5, 1e-12);
}

TEST(QpmdStep, ZeroLossGradientKeepsAnchorFixed) {
    Rng rng(73);
    const QhbmModel model(2, 1);
    const RealVector anchor = model.random_params(rng, 0.5);
    QhbmModel m;
    const Problem p = small_vqt(2, 1.0, m);
    const InnerResult r = qpmd_step(anchor, RealVector::Zero(anchor.size()), p.forward_divergence(anchor), 10.0, 20,
                                    0.05, 1e-9);
    EXPECT_LT((r.params - anchor).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(r.steps_taken, 1);
}

TEST(QpmdStep, ExactInnerSolveInMixtureCoordinatesIsNaturalGradient) {
    // In eta coordinates the QPMD fixed point is mu_a - (1/lambda) I^-1 g_mu.
    const std::vector<PauliString> basis = full_pauli_basis(1);
    Rng rng(74);
    const ExpFamilyModel a(basis, random_vector(3, rng, 0.5));
    const RealVector g_mu = random_vector(3, rng, 0.3);
    const RealMatrix info = ef_bkm_info_matrix(a).entries;
    const RealVector g_eta = -2.0 * info.ldlt().solve(g_mu);
    const GradientFn div = [&](const RealVector &eta, const EvalMode &) {
        return Objective{0.0, ef_mixture_divergence_gradient(MixtureCoords{basis, eta}, a.mu()), 0};
    };
    const double lambda = 2.0;
    const InnerResult r = qpmd_step(ef_to_mixture(a).eta, g_eta, div, lambda, 5000, 0.02, 1e-14);
    const RealVector mu_md = ef_from_mixture(MixtureCoords{basis, r.params}, 1e-12).mu();
    const RealVector mu_ngd = qpngd_step(a.mu(), g_mu, info, lambda, PinvPolicy{});
    EXPECT_LT((mu_md - mu_ngd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(QpmdStep, ShiftTallies) {
    OptimizerConfig cfg;
    const std::size_t q = 33;
    cfg.kind = OptimizerKind::qpmd;
    cfg.inner_steps = 20;
    EXPECT_EQ(shifts_per_step(cfg, q), 2 * 20 * q);
    cfg.kind = OptimizerKind::qpngd;
    EXPECT_EQ(shifts_per_step(cfg, q), 2 * q * (q + 1) + 2 * q);
    cfg.kind = OptimizerKind::sgd;
    EXPECT_EQ(shifts_per_step(cfg, q), 2 * q);
}

TEST(LagrangeStep, ZeroLossGradientKeepsDeltaZero) {
    Rng rng(75);
    QhbmModel model;
    const Problem p = small_vqt(2, 1.0, model);
    const RealVector anchor = model.random_params(rng, 0.5);
    const GradientFn zero = [](const RealVector &w, const EvalMode &) {
        return Objective{0.0, RealVector::Zero(w.size()), 0};
    };
    const InnerResult r = lagrange_step(anchor, zero, p.reverse_divergence(anchor), 10.0, 20, 0.05, 1e-9);
    EXPECT_LT((r.params - anchor).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LagrangeStep, SmallStepLimitFollowsNaturalGradient) {
    Rng rng(76);
    QhbmModel model;
    const Problem p = small_vqt(1, 1.3, model);
    for (int t = 0; t < 5; ++t) {
        const RealVector anchor = model.random_params(rng, 0.8);
        const RealVector g = p.loss(anchor, EvalMode::exact()).gradient;
        const RealMatrix info = bkm_info_qhbm(model, anchor).entries;
        const double lambda = 200.0;
        const double lr = 0.5 / (lambda * max_eigenvalue(info));
        const InnerResult r = lagrange_step(anchor, p.loss, p.reverse_divergence(anchor), lambda, 4000, lr, 1e-13);
        const RealVector ngd = qpngd_step(anchor, g, info, lambda, PinvPolicy{}) - anchor;
        EXPECT_LT(angle_deg(r.params - anchor, ngd), 5.0);
    }
}

TEST(SgdStep, ZeroGradientAndQuadraticContraction) {
    RealVector x(1);
    x << 3.0;
    EXPECT_EQ(sgd_step(x, RealVector::Zero(1), 0.1), x);
    const double curvature = 4.0;
    const double lr = 0.45; // < 2 / curvature
    for (int k = 0; k < 200; ++k) {
        x = sgd_step(x, curvature * x, lr);
    }
    EXPECT_LT(std::abs(x(0)), 1e-8);
}

TEST(AdamStep, ZeroGradientAndFirstStepClosedForm) {
    Rng rng(77);
    const RealVector x = random_vector(3, rng);
    AdamState s0;
    EXPECT_EQ(adam_step(x, RealVector::Zero(3), s0, 0.1), x);
    const RealVector g = random_vector(3, rng);
    AdamState s;
    const RealVector out = adam_step(x, g, s, 0.1);
    const RealVector expected = x - 0.1 * (g.array() / (g.array().abs() + 1e-7)).matrix();
    EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((out - x).cwiseAbs().maxCoeff(), 0.1);
}

TEST(RunOptimization, ZeroStepsGivesInitialRecordOnly) {
    Rng rng(78);
    QhbmModel model;
    const Problem p = small_vqt(2, 1.0, model);
    OptimizerConfig cfg;
    cfg.max_steps = 0;
    const Trajectory t = run_optimization(cfg, p, model.random_params(rng));
    ASSERT_EQ(t.records.size(), 1u);
    EXPECT_EQ(t.records[0].step, 0);
    EXPECT_FALSE(t.aborted);
}

TEST(RunOptimization, SameSeedIsBitwiseIdentical) {
    QhbmModel model;
    const Problem p = small_vqt(2, 1.0, model);
    Rng rng(79);
    const RealVector init = model.random_params(rng);
    for (const auto kind : {OptimizerKind::qpmd, OptimizerKind::qpngd, OptimizerKind::adam}) {
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.max_steps = 15;
        cfg.shots = 50;
        cfg.seed = 9;
        const Trajectory a = run_optimization(cfg, p, init);
        const Trajectory b = run_optimization(cfg, p, init);
        ASSERT_EQ(a.records.size(), b.records.size());
        for (std::size_t k = 0; k < a.records.size(); ++k) {
            EXPECT_EQ(a.records[k].params, b.records[k].params);
            EXPECT_EQ(a.records[k].loss, b.records[k].loss);
            EXPECT_EQ(a.records[k].shots_cumulative, b.records[k].shots_cumulative);
        }
    }
}

TEST(RunOptimization, NonFiniteLossAbortsAndKeepsTrajectory) {
    Problem p = quadratic_problem(RealMatrix::Identity(2, 2), RealVector::Zero(2));
    int calls = 0;
    const GradientFn inner = p.loss;
    p.loss = [&calls, inner](const RealVector &x, const EvalMode &m) {
        Objective o = inner(x, m);
        if (++calls == 4) {
            o.value = std::numeric_limits<double>::quiet_NaN();
        }
        return o;
    };
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.max_steps = 10;
    const Trajectory t = run_optimization(cfg, p, RealVector::Ones(2));
    EXPECT_TRUE(t.aborted);
    EXPECT_FALSE(t.abort_reason.empty());
    EXPECT_EQ(t.records.size(), 4u);
    EXPECT_EQ(t.records.back().params.size(), 2);
}

TEST(RunOptimization, ShiftTallyAccumulates) {
    QhbmModel model;
    const Problem p = small_vqt(2, 1.0, model);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::qpngd;
    cfg.max_steps = 3;
    Rng rng(83);
    const Trajectory t = run_optimization(cfg, p, model.random_params(rng, 0.5));
    const std::size_t q = static_cast<std::size_t>(model.n_phi());
    EXPECT_EQ(t.shifts_per_step, 2 * q * (q + 1) + 2 * q);
    EXPECT_EQ(t.records.back().shifts_cumulative, 3 * t.shifts_per_step);
    EXPECT_TRUE(std::isfinite(t.records.front().info_condition));
}

TEST(RunOptimization, ConfigValidation) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::qpmd;
    cfg.schedule = Schedule::one_over_j;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.kind = OptimizerKind::qpngd;
    EXPECT_NO_THROW(cfg.validate());
    cfg.inner_steps = 0;
    EXPECT_THROW(cfg.validate(), Error);
    EXPECT_THROW(optimizer_kind_from_string("newton"), Error);
    EXPECT_EQ(optimizer_kind_from_string("lagrange"), OptimizerKind::lagrange);
}

TEST(RunOptimization, QpmdConvergesToStationaryPoint) {
    QhbmModel model;
    const Problem p = small_vqt(1, 1.0, model);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::qpmd;
    cfg.max_steps = 600;
    Rng rng(80);
    const Trajectory t = run_optimization(cfg, p, model.random_params(rng, 0.3));
    ASSERT_FALSE(t.aborted);
    EXPECT_LE(p.loss(t.final_params(), EvalMode::exact()).gradient.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_GT(t.last().fidelity, 0.999);
}

TEST(RunOptimization, LateLossIsNonIncreasingForAllOptimizers) {
    QhbmModel model;
    const Problem p = small_vqt(2, 1.0, model);
    Rng rng(81);
    const RealVector init = model.random_params(rng, 0.3);
    for (const auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::qpngd, OptimizerKind::qpmd,
                            OptimizerKind::lagrange}) {
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.learning_rate = kind == OptimizerKind::adam ? 0.01 : 0.1;
        cfg.max_steps = 200;
        const Trajectory t = run_optimization(cfg, p, init);
        ASSERT_FALSE(t.aborted) << to_string(kind);
        const auto window = [&](int end) {
            double s = 0.0;
            for (int k = end - 9; k <= end; ++k) {
                s += t.records[static_cast<std::size_t>(k)].loss;
            }
            return s / 10.0;
        };
        for (int end = 160; end <= 200; ++end) {
            EXPECT_LE(window(end), window(end - 1) + 1e-6) << to_string(kind) << " step " << end;
        }
    }
}

TEST(EfLearningProblem, ExactRunRecoversDataParameters) {
    const std::vector<PauliString> basis = full_pauli_basis(1);
    Rng rng(82);
    const ExpFamilyModel truth(basis, random_vector(3, rng, 0.5));
    const Problem p = make_ef_learning_problem(basis, ef_density(truth));
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::qpngd;
    cfg.lambda = 1.0;
    cfg.max_steps = 20;
    const Trajectory t = run_optimization(cfg, p, RealVector::Zero(3));
    EXPECT_LT((t.final_params() - truth.mu()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GT(t.last().fidelity, 1.0 - 1e-10);
}

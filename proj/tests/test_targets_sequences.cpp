#include "qpgeo/sequences.hpp"
#include "qpgeo/targets.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace qpgeo;

namespace {

double log_log_slope(const std::vector<double> &x, const std::vector<double> &y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double lx = std::log(x[k]);
        const double ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

OptimizerConfig short_qpmd(int steps) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::qpmd;
    cfg.max_steps = steps;
    return cfg;
}

bool same_trajectory(const Trajectory &a, const Trajectory &b) {
    if (a.records.size() != b.records.size()) {
        return false;
    }
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        if (a.records[k].params != b.records[k].params || a.records[k].loss != b.records[k].loss ||
            !(a.records[k].fidelity == b.records[k].fidelity)) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(Tfim, TwoQubitClosedForms) {
    const ComplexMatrix zz = tfim_hamiltonian({2, 1.0, 0.0}).matrix();
    RealVector d(4);
    d << -1, 1, 1, -1;
    EXPECT_LT((zz - ComplexMatrix(d.cast<cplx>().asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
    const ComplexMatrix x = tfim_hamiltonian({2, 0.0, 1.0}).matrix();
    const ComplexMatrix expected =
        -(pauli_dense(PauliString("XI")) + pauli_dense(PauliString("IX")));
    EXPECT_LT((x - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(tfim_hamiltonian({1, 1.0, 1.0}), Error);
}

TEST(Tfim, RealSymmetricWithFlipSymmetricSpectrum) {
    const TfimSpec spec{4, 1.0, 1.0};
    const ComplexMatrix h = tfim_hamiltonian(spec).matrix();
    EXPECT_LT(h.imag().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((h.real() - h.real().transpose()).cwiseAbs().maxCoeff(), 1e-12);
    // The global flip prod X commutes with H.
    const ComplexMatrix flip = pauli_dense(PauliString("XXXX"));
    EXPECT_LT((flip * h - h * flip).cwiseAbs().maxCoeff(), 1e-12);
    const Spectrum s = eigh(h);
    Eigen::SelfAdjointEigenSolver<RealMatrix> oracle(h.real());
    EXPECT_NEAR(s.values.minCoeff(), oracle.eigenvalues().minCoeff(), 1e-10);
}

TEST(Tfim, GibbsTargetDelegatesToGibbsState) {
    const TfimSpec spec{3, 1.0, 0.7};
    const DensityOperator a = tfim_gibbs_target(spec, 0.0);
    EXPECT_LT((a.matrix() - ComplexMatrix::Identity(8, 8) / 8.0).cwiseAbs().maxCoeff(), 1e-12);
    const DensityOperator b = tfim_gibbs_target(spec, 1.5);
    EXPECT_LT((b.matrix() - gibbs_state(tfim_hamiltonian(spec), 1.5, 3).matrix()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Channels, ZeroDurationIsIdentity) {
    const ChannelSpec c = tfim_channel({3, 1.0, 1.0}, 0.0);
    EXPECT_LT((trotter_unitary(c) - ComplexMatrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Channels, CommutingTermsAreExact) {
    for (const int order : {1, 2}) {
        const ChannelSpec c = tfim_channel({4, 1.3, 0.0}, 2.0, order, 1);
        EXPECT_LT(trotter_error(c), 1e-12);
    }
}

TEST(Channels, DefaultSubstepsMeetUnitaryTolerance) {
    const ChannelSpec c = tfim_channel({4, 1.0, 1.0}, 5.0);
    EXPECT_GE(c.substeps, default_substeps(5.0, 1.0, 1.0));
    EXPECT_LE(trotter_error(c), 1e-3);
}

TEST(Channels, SecondOrderErrorSlope) {
    std::vector<double> n;
    std::vector<double> err;
    for (const int s : {4, 8, 16, 32, 64}) {
        n.push_back(s);
        err.push_back(trotter_error(tfim_channel({4, 1.0, 1.0}, 1.0, 2, s)));
    }
    EXPECT_NEAR(log_log_slope(n, err), -2.0, 0.2);
}

TEST(Channels, ApplyPreservesTraceAndPositivity) {
    Rng rng(90);
    const DensityOperator rho = qpgeo::testing::random_state(3, rng);
    const DensityOperator out = apply_channel(tfim_channel({3, 0.8, 1.2}, 1.7), rho);
    EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-10);
    EXPECT_GE(eigh(out.matrix()).values.minCoeff(), -1e-10);
    EXPECT_THROW(apply_channel(tfim_channel({2, 1.0, 1.0}, 1.0), rho), Error);
}

TEST(Channels, ExactModeAcceptsAnyHermitian) {
    Rng rng(91);
    const HermitianOperator h(qpgeo::testing::random_hermitian(4, rng));
    ChannelSpec c{h, 2, 0.3, 2, 1, ChannelMode::exact};
    const ComplexMatrix u = channel_unitary(c);
    EXPECT_LT((u * u.adjoint() - ComplexMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((u - unitary_exp(h, 0.3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GaussianProcess, SinglePointVariance) {
    const GpDriveSpec spec{1.0, 1.0, {0.0}, 1e-9};
    Rng rng = make_stream(3, "gp-drive");
    const int draws = 100000;
    double s = 0.0;
    double s2 = 0.0;
    for (int k = 0; k < draws; ++k) {
        const double v = gp_sample(spec, rng)(0);
        s += v;
        s2 += v * v;
    }
    const double var = s2 / draws - (s / draws) * (s / draws);
    // Var of the sample variance of a unit normal is about 2 / draws.
    EXPECT_NEAR(var, 1.0 + 1e-9, 5.0 * std::sqrt(2.0 / draws));
}

TEST(GaussianProcess, EmptyAndDistantPoints) {
    Rng rng(92);
    EXPECT_EQ(gp_sample(GpDriveSpec{1.0, 1.0, {}, 1e-9}, rng).size(), 0);
    const GpDriveSpec spec{1.0, 1.0, {0.0, 50.0}, 1e-9};
    const int draws = 20000;
    double sab = 0.0;
    for (int k = 0; k < draws; ++k) {
        const RealVector v = gp_sample(spec, rng);
        sab += v(0) * v(1);
    }
    EXPECT_LT(std::abs(sab / draws), 5.0 / std::sqrt(static_cast<double>(draws)));
}

TEST(GaussianProcess, RejectsBadSpecs) {
    Rng rng(93);
    EXPECT_THROW(gp_sample(GpDriveSpec{1.0, 1.0, {1.0, 0.5}, 1e-9}, rng), Error);
    EXPECT_THROW(gp_sample(GpDriveSpec{1.0, 0.0, {0.0}, 1e-9}, rng), Error);
    EXPECT_THROW(gp_sample(GpDriveSpec{1.0, 1.0, {0.0}, 0.0}, rng), Error);
}

TEST(GaussianProcess, DrivenChannelsAreSeededAndMeetTolerance) {
    const DriveSequence a = gp_driven_channels({4, 1.0, 1.0}, 8, 40.0, 5);
    const DriveSequence b = gp_driven_channels({4, 1.0, 1.0}, 8, 40.0, 5);
    ASSERT_EQ(a.channels.size(), 8u);
    EXPECT_NEAR(a.midpoints.front(), 2.5, 1e-15);
    for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(a.tfims[k].j, b.tfims[k].j);
        EXPECT_EQ(a.tfims[k].lambda, b.tfims[k].lambda);
        EXPECT_LE(trotter_error(a.channels[k]), 1e-3);
    }
}

TEST(Sequences, SinglePointEqualsOneRun) {
    const QhbmModel model(2, 1);
    const HermitianOperator h = tfim_hamiltonian({2, 1.0, 1.0});
    SequenceSettings s;
    s.steps_first = 20;
    s.init_policy = InitPolicy::independent;
    s.seed = 3;
    const SequenceResult r = chained_optimize(model, h, {1.0}, short_qpmd(20), s);
    Rng rng = make_stream(3, "init", 0);
    OptimizerConfig cfg = short_qpmd(20);
    cfg.seed = stream_seed(3, "measurement", 0);
    const Trajectory t =
        run_optimization(cfg, make_vqt_problem(model, h, 1.0, gibbs_state(h, 1.0, 2)), model.random_params(rng, s.init_scale));
    ASSERT_EQ(r.runs.size(), 1u);
    EXPECT_TRUE(same_trajectory(r.runs[0], t));
    EXPECT_TRUE(r.metric_variation.empty());
}

TEST(Sequences, RepeatedPointBarelyMovesWhenChained) {
    const QhbmModel model(2, 1);
    const HermitianOperator h = tfim_hamiltonian({2, 1.0, 1.0});
    SequenceSettings s;
    s.steps_first = 1500;
    s.steps_rest = 20;
    const SequenceResult r = chained_optimize(model, h, {1.0, 1.0}, short_qpmd(0), s);
    ASSERT_EQ(r.runs.size(), 2u);
    EXPECT_LT((r.optima[1] - r.optima[0]).norm(), 1e-3);
}

TEST(Sequences, ZeroZetaIsBitwisePlainChaining) {
    const QhbmModel model(2, 1);
    const HermitianOperator h = tfim_hamiltonian({2, 1.0, 1.0});
    SequenceSettings s;
    s.steps_first = 30;
    s.steps_rest = 10;
    const std::vector<double> betas = {0.5, 0.8, 1.1};
    const SequenceResult plain = chained_optimize(model, h, betas, short_qpmd(0), s);
    const SequenceResult hist = chained_with_history(model, h, betas, short_qpmd(0), s, 0.0);
    ASSERT_EQ(plain.runs.size(), hist.runs.size());
    for (std::size_t k = 0; k < plain.runs.size(); ++k) {
        EXPECT_TRUE(same_trajectory(plain.runs[k], hist.runs[k]));
    }
}

TEST(Sequences, HistoryPullsTowardCommonAnchor) {
    const QhbmModel model(2, 1);
    const HermitianOperator h = tfim_hamiltonian({2, 1.0, 1.0});
    SequenceSettings s;
    s.steps_first = 5;
    s.steps_rest = 30;
    s.init_policy = InitPolicy::independent;
    double last = std::numeric_limits<double>::infinity();
    for (const double zeta : {0.0, 0.5, 0.9}) {
        const SequenceResult r = chained_with_history(model, h, {1.0, 1.0}, short_qpmd(0), s, zeta);
        // Distance in the divergence the history term penalizes.
        const double dist = relative_entropy(qhbm_density(model, r.optima[0]), qhbm_density(model, r.optima[1]));
        EXPECT_LT(dist, last) << zeta;
        last = dist;
    }
}

TEST(Sequences, MetricVariationIsSymmetricAndZeroOnDiagonal) {
    const QhbmModel model(2, 1);
    Rng rng(94);
    const RealVector a = model.random_params(rng, 0.5);
    const RealVector b = model.random_params(rng, 0.5);
    EXPECT_EQ(metric_variation(model, a, a), 0.0);
    EXPECT_NEAR(metric_variation(model, a, b), metric_variation(model, b, a), 1e-14);
    EXPECT_GT(metric_variation(model, a, b), 0.0);
}

TEST(Sequences, ChainedWarmStartLowersInitialLoss) {
    const QhbmModel model(2, 1);
    const HermitianOperator h = tfim_hamiltonian({2, 1.0, 1.0});
    SequenceSettings s;
    s.steps_first = 100;
    s.steps_rest = 5;
    double chained = 0.0;
    double independent = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        s.seed = seed;
        s.init_policy = InitPolicy::chained;
        chained += chained_optimize(model, h, {1.0, 1.25}, short_qpmd(0), s).runs[1].records[0].loss;
        s.init_policy = InitPolicy::independent;
        independent += chained_optimize(model, h, {1.0, 1.25}, short_qpmd(0), s).runs[1].records[0].loss;
    }
    EXPECT_LE(chained, independent);
}

TEST(Sequences, LastStepsMeanFidelity) {
    Trajectory t;
    for (int k = 0; k <= 20; ++k) {
        StepRecord r;
        r.step = k;
        r.fidelity = k;
        t.records.push_back(r);
    }
    EXPECT_DOUBLE_EQ(tail_mean_fidelity(t, 10), 15.5);
    EXPECT_DOUBLE_EQ(tail_mean_fidelity(t, 100), 10.0);
}

TEST(Qvartz, IdentityChannelsKeepFidelity) {
    const QhbmModel model(2, 1);
    const TfimSpec spec{2, 1.0, 1.0};
    std::vector<ChannelSpec> ch(3, tfim_channel(spec, 0.0));
    SequenceSettings s;
    s.steps_first = 200;
    s.steps_rest = 20;
    const QvartzResult r = qvartz_propagate(model, tfim_hamiltonian(spec), 1.0, ch, short_qpmd(0), s);
    ASSERT_EQ(r.sequence.final_fidelity.size(), 4u);
    ASSERT_EQ(r.references.size(), 4u);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_GE(r.sequence.final_fidelity[k], r.sequence.final_fidelity[0] - 1e-6);
    }
}

TEST(Qvartz, SingleExactChannelIsLearned) {
    // A one-qubit QHBM is fully expressive for one-qubit states.
    const QhbmModel model(1, 2);
    const HermitianOperator h0(pauli_sum_dense({PauliString("X", -1.0), PauliString("Z", -0.4)}));
    const HermitianOperator hc(pauli_sum_dense({PauliString("Y", 0.7), PauliString("Z", 0.5)}));
    SequenceSettings s;
    s.steps_first = 300;
    s.steps_rest = 300;
    s.init_scale = 0.5;
    // Inner step below 2 / (lambda mu_max) for this model, so the inner loop contracts.
    OptimizerConfig cfg = short_qpmd(0);
    cfg.inner_lr = 0.01;
    const QvartzResult r =
        qvartz_propagate(model, h0, 1.5, {ChannelSpec{hc, 1, 1.0, 2, 1, ChannelMode::exact}}, cfg, s);
    EXPECT_GE(r.sequence.final_fidelity.back(), 0.99);
    EXPECT_FALSE(r.sequence.aborted);
}

TEST(Qvartz, ReferencesAreExactProducts) {
    const QhbmModel model(2, 1);
    const TfimSpec spec{2, 1.0, 1.0};
    const DriveSequence d = gp_driven_channels(spec, 2, 4.0, 1);
    SequenceSettings s;
    s.steps_first = 3;
    s.steps_rest = 3;
    const QvartzResult r = qvartz_propagate(model, tfim_hamiltonian(spec), 2.0, d.channels, short_qpmd(0), s);
    const ComplexMatrix u = channel_unitary(d.channels[1]) * channel_unitary(d.channels[0]);
    const ComplexMatrix expected = u * tfim_gibbs_target(spec, 2.0).matrix() * u.adjoint();
    EXPECT_LT((r.references[2].matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

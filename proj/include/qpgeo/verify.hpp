#pragma once

// Acceptance checks with pinned instances and tolerances. Each check builds its
// instances from named RNG streams of one base seed and reports pass/fail with
// the measured quantity, so a failure is diagnosable from the line alone.

#include "qpgeo/harness.hpp"

#include <chrono>
#include <iomanip>
#include <numbers>

namespace qpgeo::verify {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    int workers = 1;
    /// Directory for harness outputs the checks write and compare.
    std::filesystem::path scratch = std::filesystem::temp_directory_path() / "qpgeo-verify";
};

inline constexpr int kCriterionCount = 10;

namespace detail {

inline ComplexMatrix random_hermitian(Eigen::Index dim, Rng &rng) {
    ComplexMatrix m(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            m(i, j) = cplx{standard_normal(rng), standard_normal(rng)};
        }
    }
    return 0.5 * (m + m.adjoint());
}

/// Full-rank state A A^dag / tr, mixed with 5% of the maximally mixed state.
inline DensityOperator random_state(int n, Rng &rng) {
    const auto dim = static_cast<Eigen::Index>(dim_of(n));
    ComplexMatrix a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            a(i, j) = cplx{standard_normal(rng), standard_normal(rng)};
        }
    }
    ComplexMatrix m = a * a.adjoint();
    m /= m.trace().real();
    m = 0.95 * m + 0.05 * ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim);
    return DensityOperator::from_unnormalized(m, n);
}

inline RealVector random_vector(Eigen::Index n, Rng &rng, double scale) {
    RealVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = scale * standard_normal(rng);
    }
    return v;
}

inline RealVector fd_gradient(const std::function<double(const RealVector &)> &f, const RealVector &x,
                              double h = 1e-5) {
    RealVector g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        RealVector a = x;
        RealVector b = x;
        a(k) += h;
        b(k) -= h;
        g(k) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// Symmetrized central-difference Jacobian of a gradient map.
inline RealMatrix fd_hessian(const std::function<RealVector(const RealVector &)> &grad, const RealVector &x,
                             double h = 1e-5) {
    const Eigen::Index d = x.size();
    RealMatrix hess(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        RealVector a = x;
        RealVector b = x;
        a(k) += h;
        b(k) -= h;
        hess.col(k) = (grad(a) - grad(b)) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

/// ||g - fd||_inf / max(||fd||_inf, 1).
inline double relative_error(const RealVector &g, const RealVector &fd) {
    return (g - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff());
}

inline double log_log_slope(const std::vector<double> &x, const std::vector<double> &y) {
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

inline std::string num(double x, int prec = 3) {
    std::ostringstream os;
    os << std::setprecision(prec) << x;
    return os.str();
}

/// All Pauli strings with exactly one non-identity letter.
inline std::vector<PauliString> local_pauli_basis(int n) {
    std::vector<PauliString> out;
    for (int q = 0; q < n; ++q) {
        for (const char c : {'X', 'Y', 'Z'}) {
            out.push_back(PauliString::single(n, q, c, 1.0));
        }
    }
    return out;
}

/// First step whose value reaches `threshold`, or -1.
inline int first_reaching(const std::vector<double> &curve, double threshold) {
    for (std::size_t k = 0; k < curve.size(); ++k) {
        if (curve[k] >= threshold) {
            return static_cast<int>(k);
        }
    }
    return -1;
}

inline std::vector<double> mean_fidelity_curve(const std::vector<Trajectory> &runs) {
    std::size_t len = 0;
    for (const auto &t : runs) {
        len = std::max(len, t.records.size());
    }
    std::vector<double> curve(len, 0.0);
    for (std::size_t k = 0; k < len; ++k) {
        int n = 0;
        for (const auto &t : runs) {
            // Aborted runs count with their last fidelity.
            curve[k] += t.records[std::min(k, t.records.size() - 1)].fidelity;
            ++n;
        }
        curve[k] /= n;
    }
    return curve;
}

inline std::string read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::string without_output_dir(const std::string &config_text) {
    harness::json j = harness::json::parse(config_text);
    j.erase("output_dir");
    return j.dump();
}

/// Relative paths of every regular file below `root`, sorted.
inline std::vector<std::string> list_files(const std::filesystem::path &root) {
    std::vector<std::string> out;
    for (const auto &e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out.push_back(std::filesystem::relative(e.path(), root).generic_string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// 1. Gradient oracles
// ---------------------------------------------------------------------------

inline CriterionResult gradient_oracles(const VerifyOptions &o) {
    constexpr double kTol = 1e-5;
    constexpr int kInstances = 10;
    double worst[6] = {0, 0, 0, 0, 0, 0};
    Rng rng = make_stream(o.seed, "gradient-oracles");
    for (int t = 0; t < kInstances; ++t) {
        const QhbmModel model(3, 1 + t % 2);
        const RealVector omega = model.random_params(rng, 0.5);
        const HermitianOperator h(detail::random_hermitian(8, rng));
        const DensityOperator sigma = detail::random_state(3, rng);
        const double beta = 0.5 + uniform01(rng);
        const LossEvaluation vqt = vqt_loss(model, omega, h, beta);
        const LossEvaluation qmhl = qmhl_loss(model, omega, sigma);
        const RealVector fd_vqt = detail::fd_gradient([&](const RealVector &w) { return vqt_loss(model, w, h, beta).value; }, omega);
        const RealVector fd_qmhl = detail::fd_gradient([&](const RealVector &w) { return qmhl_loss(model, w, sigma).value; }, omega);
        const Eigen::Index c = model.n_theta();
        const Eigen::Index q = model.n_phi();
        worst[0] = std::max(worst[0], detail::relative_error(vqt.grad_theta, fd_vqt.head(c)));
        worst[1] = std::max(worst[1], detail::relative_error(vqt.grad_phi, fd_vqt.tail(q)));
        worst[2] = std::max(worst[2], detail::relative_error(qmhl.grad_phi, fd_qmhl.tail(q)));
        worst[3] = std::max(worst[3], detail::relative_error(qmhl.grad_theta, fd_qmhl.head(c)));

        const std::vector<PauliString> basis = detail::local_pauli_basis(3);
        const ExpFamilyModel m(basis, detail::random_vector(static_cast<Eigen::Index>(basis.size()), rng, 0.5));
        const DensityOperator target = detail::random_state(3, rng);
        const HermitianOperator k(detail::random_hermitian(8, rng));
        const auto learn = [&](const RealVector &mu) { return relative_entropy(target, ef_density(m.with_mu(mu))); };
        const auto sim = [&](const RealVector &mu) {
            return relative_entropy(ef_density(m.with_mu(mu)), gibbs_state(k, beta, 3));
        };
        worst[4] = std::max(worst[4], detail::relative_error(ef_learning_gradient(m, target),
                                                             detail::fd_gradient(learn, m.mu())));
        worst[5] = std::max(worst[5], detail::relative_error(ef_simulation_gradient(m, k, beta),
                                                             detail::fd_gradient(sim, m.mu())));
    }
    const char *names[6] = {"vqt-theta", "vqt-phi", "qmhl-phi", "qmhl-theta", "ef-learning", "ef-simulation"};
    bool ok = true;
    std::string detail = std::to_string(kInstances) + " instances each, n=3; worst rel err:";
    for (int i = 0; i < 6; ++i) {
        ok = ok && worst[i] <= kTol;
        detail += std::string(" ") + names[i] + "=" + detail::num(worst[i]);
    }
    return {1, "gradient oracles", ok, detail + " (tol 1e-5)", 0.0};
}

// ---------------------------------------------------------------------------
// 2. Metric oracles
// ---------------------------------------------------------------------------

inline CriterionResult metric_oracles(const VerifyOptions &o) {
    constexpr double kBlockTol = 1e-8;
    constexpr double kHessianTol = 1e-4;
    constexpr double kPsdTol = -1e-8;
    constexpr int kModels = 24;
    Rng rng = make_stream(o.seed, "metric-oracles");
    double bkm_err = 0.0;
    double bh_err = 0.0;
    double hess_err = 0.0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int t = 0; t < kModels; ++t) {
        const QhbmModel model(1 + t % 3, 1 + (t / 3) % 2);
        const RealVector omega = model.random_params(rng, 0.5);
        const RealMatrix bkm = bkm_info_qhbm(model, omega).entries;
        const RealMatrix bh = bh_info_qhbm(model, omega).entries;
        const double scale = std::max(1.0, bkm.cwiseAbs().maxCoeff());
        bkm_err = std::max(bkm_err, (bkm - info_matrix_oracle_qhbm(model, omega, MetricKind::bkm).entries)
                                            .cwiseAbs()
                                            .maxCoeff() /
                                        scale);
        bh_err = std::max(bh_err, (bh - info_matrix_oracle_qhbm(model, omega, MetricKind::bh).entries)
                                          .cwiseAbs()
                                          .maxCoeff() /
                                      scale);
        hess_err = std::max(hess_err, bkm_hessian_check(model, omega, 1e-4));
        min_gap = std::min(min_gap, min_eigenvalue(bkm - bh));
    }
    const bool ok = bkm_err <= kBlockTol && bh_err <= kBlockTol && hess_err <= kHessianTol && min_gap >= kPsdTol;
    return {2, "metric oracles", ok,
            std::to_string(kModels) + " models (n=1..3, 1-2 layers): BKM block err " + detail::num(bkm_err) +
                ", BH block err " + detail::num(bh_err) + " (tol 1e-8); Hessian err " + detail::num(hess_err) +
                " (tol 1e-4); min eig(BKM-BH) " + detail::num(min_gap) + " (tol -1e-8)",
            0.0};
}

// ---------------------------------------------------------------------------
// 3. Third-order symmetry of relative entropy
// ---------------------------------------------------------------------------

inline CriterionResult third_order_symmetry(const VerifyOptions &o) {
    Rng rng = make_stream(o.seed, "symmetry-gap");
    std::vector<double> lambdas;
    for (int k = 0; k <= 8; ++k) {
        lambdas.push_back(1e-3 * std::pow(10.0, k / 4.0));
    }
    bool ok = true;
    std::string slopes;
    for (int t = 0; t < 5; ++t) {
        const int n = 1 + t % 2;
        const auto dim = static_cast<Eigen::Index>(dim_of(n));
        const ComplexMatrix k0 = detail::random_hermitian(dim, rng);
        ComplexMatrix v = detail::random_hermitian(dim, rng);
        v /= v.norm();
        const auto path = [&](double l) { return gibbs_state(HermitianOperator(k0 + l * v), 1.0, n); };
        const RealVector gaps = third_order_symmetry_gap(path, lambdas);
        const double slope =
            detail::log_log_slope(lambdas, std::vector<double>(gaps.data(), gaps.data() + gaps.size()));
        ok = ok && std::abs(slope - 3.0) <= 0.1;
        slopes += (t ? ", " : "") + detail::num(slope, 4);
    }
    return {3, "third-order symmetry", ok, "log-log slopes on 5 paths: " + slopes + " (3 +/- 0.1)", 0.0};
}

// ---------------------------------------------------------------------------
// 4. Mirror descent / natural gradient duality
// ---------------------------------------------------------------------------

/**
 * QPMD in mixture coordinates with an inner loop run to convergence, mapped
 * back to exponential coordinates, against the BKM natural-gradient step.
 * Returns the max-abs difference of the resulting mu.
 */
inline double duality_gap(const ExpFamilyModel &anchor, const RealVector &g_mu, double lambda) {
    const std::vector<PauliString> &basis = anchor.basis();
    const RealMatrix info = ef_bkm_info_matrix(anchor).entries;
    // d mu / d eta = -2 I^-1, so the loss gradient in eta is -2 I^-1 g_mu.
    const RealVector g_eta = -2.0 * info.ldlt().solve(g_mu);
    const GradientFn div = [&](const RealVector &eta, const EvalMode &) {
        return Objective{0.0, ef_mixture_divergence_gradient(MixtureCoords{basis, eta}, anchor.mu()), 0};
    };
    // The inner Hessian is 4 lambda I^-1; a step of 1 / (4 lambda max eig I^-1) contracts.
    const double inner_lr = 0.5 * min_eigenvalue(info) / (4.0 * lambda);
    const InnerResult r = qpmd_step(ef_to_mixture(anchor).eta, g_eta, div, lambda, 20000, inner_lr, 1e-15);
    const RealVector mu_md = ef_from_mixture(MixtureCoords{basis, r.params}, 1e-13).mu();
    const RealVector mu_ngd = qpngd_step(anchor.mu(), g_mu, info, lambda, PinvPolicy{});
    return (mu_md - mu_ngd).cwiseAbs().maxCoeff();
}

inline CriterionResult mirror_duality(const VerifyOptions &o) {
    constexpr double kTol = 1e-6;
    const std::vector<PauliString> basis = full_pauli_basis(1);
    Rng rng = make_stream(o.seed, "mirror-duality");
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const ExpFamilyModel anchor(basis, detail::random_vector(3, rng, 0.5));
        const RealVector g = detail::random_vector(3, rng, 0.3);
        worst = std::max(worst, duality_gap(anchor, g, 2.0 + t % 3));
    }
    return {4, "mirror/NGD duality", worst <= kTol,
            "10 instances, 1-qubit full basis: max |mu_md - mu_ngd| " + detail::num(worst) + " (tol 1e-6)", 0.0};
}

// ---------------------------------------------------------------------------
// 5. Fisher efficiency surrogate
// ---------------------------------------------------------------------------

inline CriterionResult fisher_efficiency(const VerifyOptions &o) {
    const harness::RunConfig c = harness::default_config(harness::Experiment::fisher_efficiency);
    const harness::FisherResult f =
        harness::fisher_efficiency(c.resolved_optimizer(), c.fisher, c.trials, o.seed, o.workers);
    const harness::FisherRow &last = f.rows.back();
    const bool ok = !f.aborted && last.j == 200 && last.ratio() >= 0.7 && last.ratio() <= 1.4;
    return {5, "Fisher efficiency", ok,
            std::to_string(c.trials) + " trials, mu*=" + detail::num(c.fisher.mu_star) + ": Var(mu_200) " +
                detail::num(last.empirical_var, 4) + " vs I^-1/j " + detail::num(last.predicted_var, 4) +
                ", ratio " + detail::num(last.ratio(), 4) + " (in [0.7, 1.4])",
            0.0};
}

// ---------------------------------------------------------------------------
// 6. VQT convergence on the 4-qubit TFIM
// ---------------------------------------------------------------------------

struct VqtConvergence {
    std::vector<double> qpmd;
    std::vector<double> qpngd;
    std::vector<double> sgd;
    /// Max ||grad L||_inf over QPMD trials that reached fidelity 0.99.
    double qpmd_stationarity = 0.0;
    int qpmd_converged = 0;
};

inline constexpr int kVqtTrials = 16;

/// Mean fidelity curves over 16 trials, exact gradients, library defaults per optimizer.
inline VqtConvergence vqt_convergence(const VerifyOptions &o) {
    const QhbmModel model(4, 3);
    const TfimSpec tfim{4, 1.0, 1.0};
    const HermitianOperator h = tfim_hamiltonian(tfim);
    const Problem p = make_vqt_problem(model, h, 2.0, tfim_gibbs_target(tfim, 2.0));
    VqtConvergence out;
    for (const auto kind : {OptimizerKind::qpmd, OptimizerKind::qpngd, OptimizerKind::sgd}) {
        const auto runs = harness::parallel_trials<Trajectory>(kVqtTrials, o.workers, [&](int t) {
            const std::uint64_t seed = harness::trial_seed(o.seed, t);
            Rng rng = make_stream(seed, "init");
            OptimizerConfig cfg;
            cfg.kind = kind;
            cfg.max_steps = 500;
            cfg.seed = seed;
            return run_optimization(cfg, p, model.random_params(rng, harness::ModelSpec{}.init_scale), {false, false});
        });
        const std::vector<double> curve = detail::mean_fidelity_curve(runs);
        if (kind == OptimizerKind::qpmd) {
            out.qpmd = curve;
            for (const auto &t : runs) {
                if (t.last().fidelity >= 0.99) {
                    ++out.qpmd_converged;
                    out.qpmd_stationarity = std::max(
                        out.qpmd_stationarity, p.loss(t.final_params(), EvalMode::exact()).gradient.cwiseAbs().maxCoeff());
                }
            }
        } else if (kind == OptimizerKind::qpngd) {
            out.qpngd = curve;
        } else {
            out.sgd = curve;
        }
    }
    return out;
}

inline CriterionResult vqt_convergence_criterion(const VerifyOptions &o) {
    const VqtConvergence v = vqt_convergence(o);
    const int s_md = detail::first_reaching(v.qpmd, 0.95);
    const int s_ngd = detail::first_reaching(v.qpngd, 0.95);
    const int s_sgd = detail::first_reaching(v.sgd, 0.95);
    // "Reaches within 500 steps": the mean curve crosses the threshold at some step <= 500.
    const bool md_ok = detail::first_reaching(v.qpmd, 0.99) >= 0;
    const bool ngd_ok = s_ngd >= 0;
    const auto slower = [&](int other) { return other >= 0 && (s_sgd < 0 || s_sgd > other); };
    const bool ok = md_ok && ngd_ok && slower(s_md) && slower(s_ngd);
    const auto steps = [](int s) { return s < 0 ? std::string("never") : std::to_string(s); };
    const auto peak = [](const std::vector<double> &c) { return *std::max_element(c.begin(), c.end()); };
    return {6, "VQT convergence", ok,
            "4-qubit TFIM beta=2, 16-trial mean fidelity, best within 500 steps: QPMD " +
                detail::num(peak(v.qpmd), 4) + " (>= 0.99), QPNGD " + detail::num(peak(v.qpngd), 4) +
                " (>= 0.95), SGD " + detail::num(peak(v.sgd), 4) + "; steps to 0.95: QPMD " + steps(s_md) +
                ", QPNGD " + steps(s_ngd) + ", SGD " + steps(s_sgd) +
                " (SGD strictly slowest); QPMD trials ending >= 0.99: " + std::to_string(v.qpmd_converged) + "/16" +
                (v.qpmd_converged > 0 ? ", max |grad| there " + detail::num(v.qpmd_stationarity) : std::string()),
            0.0};
}

// ---------------------------------------------------------------------------
// 7. Sequence ordering
// ---------------------------------------------------------------------------

inline harness::RunConfig sequence_config(harness::Experiment e, const VerifyOptions &o) {
    harness::RunConfig c = harness::default_config(e);
    c.seed = o.seed;
    c.trials = 16;
    c.workers = o.workers;
    c.target.beta = 2.0;
    c.output_dir = (o.scratch / to_string(e)).string();
    return c;
}

struct OrderingValues {
    double chained_qpmd = 0.0;
    double independent_qpmd = 0.0;
    double chained_adam = 0.0;
    double independent_adam = 0.0;
};

/// Per-cell means over trials and points of `key` (mean_final_fidelity or mean_heat_fidelity).
inline OrderingValues ordering_values(const harness::RunOutcome &r, const char *key) {
    const auto v = [&](const char *name) { return r.summary.at("cells").at(name).at(key).get<double>(); };
    return {v("chained_qpmd"), v("independent_qpmd"), v("chained_adam"), v("independent_adam")};
}

inline CriterionResult sequence_ordering(const VerifyOptions &o) {
    bool ok = true;
    std::string detail;
    for (const auto e : {harness::Experiment::meta_vqt, harness::Experiment::qvartz}) {
        const harness::RunOutcome r = harness::run_experiment(sequence_config(e, o));
        const OrderingValues v = ordering_values(r, "mean_final_fidelity");
        const OrderingValues h = ordering_values(r, "mean_heat_fidelity");
        const bool here = !r.aborted && v.chained_qpmd >= v.independent_qpmd && v.chained_qpmd >= v.chained_adam;
        ok = ok && here;
        detail += std::string(detail.empty() ? "" : "; ") + to_string(e) + ": QPMD chained " +
                  detail::num(v.chained_qpmd, 4) + " vs independent " + detail::num(v.independent_qpmd, 4) +
                  ", Adam chained " + detail::num(v.chained_adam, 4) + " vs independent " +
                  detail::num(v.independent_adam, 4) + " (last-10 means " + detail::num(h.chained_qpmd, 4) + "/" +
                  detail::num(h.independent_qpmd, 4) + "/" + detail::num(h.chained_adam, 4) + "/" +
                  detail::num(h.independent_adam, 4) + ")" + (r.aborted ? " (aborted runs)" : "");
    }
    return {7, "sequence ordering", ok, "16 trials, mean final fidelity over points; " + detail, 0.0};
}

// ---------------------------------------------------------------------------
// 8. Trotter fidelity
// ---------------------------------------------------------------------------

inline CriterionResult trotter_fidelity(const VerifyOptions &o) {
    const harness::RunConfig c = sequence_config(harness::Experiment::qvartz, o);
    const harness::ChannelsSpec &ch = c.sequence.channels;
    const DriveSequence d = gp_driven_channels(harness::tfim_of(c), ch.intervals, ch.total_time, c.seed,
                                               ch.trotter_order, ch.mode, ch.gp_amplitude, ch.gp_length_scale);
    double worst = 0.0;
    for (const auto &chan : d.channels) {
        worst = std::max(worst, trotter_error(chan));
    }
    std::vector<double> n;
    std::vector<double> err;
    for (const int s : {4, 8, 16, 32, 64}) {
        n.push_back(s);
        err.push_back(trotter_error(tfim_channel({4, 1.0, 1.0}, 1.0, 2, s)));
    }
    const double slope = -detail::log_log_slope(n, err);
    const bool ok = worst <= 1e-3 && std::abs(slope - 2.0) <= 0.2;
    return {8, "Trotter fidelity", ok,
            std::to_string(d.channels.size()) + " GP-driven channels: max ||U_trot - U_exact||_2 " +
                detail::num(worst) + " (tol 1e-3); order-2 slope " + detail::num(slope, 4) + " (2 +/- 0.2)",
            0.0};
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

/// Small configs covering every experiment, with two trials on two workers.
inline std::vector<harness::RunConfig> determinism_configs(const VerifyOptions &o) {
    using harness::Experiment;
    std::vector<harness::RunConfig> out;
    for (const auto e : {Experiment::vqt, Experiment::qmhl, Experiment::meta_vqt, Experiment::qvartz,
                         Experiment::fisher_efficiency}) {
        harness::RunConfig c = harness::default_config(e);
        c.seed = o.seed;
        c.trials = e == Experiment::fisher_efficiency ? 40 : 2;
        c.workers = 2;
        c.model = {2, 1, 0.1};
        c.optimizer.max_steps = 20;
        c.sequence.betas = {0.5, 1.0, 1.5};
        c.sequence.steps_first = 15;
        c.sequence.steps_rest = 5;
        c.sequence.channels.intervals = 2;
        c.sequence.channels.total_time = 4.0;
        c.fisher.steps = 30;
        if (e == Experiment::vqt) {
            c.shots = 64;
        }
        if (e == Experiment::qmhl) {
            c.optimizer.kind = OptimizerKind::qpngd;
        }
        out.push_back(c);
    }
    return out;
}

inline CriterionResult determinism(const VerifyOptions &o) {
    bool ok = true;
    std::size_t files = 0;
    std::string bad;
    for (harness::RunConfig c : determinism_configs(o)) {
        const std::filesystem::path base = o.scratch / "determinism" / to_string(c.experiment);
        std::filesystem::remove_all(base);
        c.output_dir = (base / "a").string();
        harness::run_experiment(c);
        c.output_dir = (base / "b").string();
        harness::run_experiment(c);
        // Replay from the written snapshot.
        harness::RunConfig replay = harness::load_config(base / "a" / "config.json");
        replay.output_dir = (base / "c").string();
        harness::run_experiment(replay);
        const auto fa = detail::list_files(base / "a");
        if (fa != detail::list_files(base / "b") || fa != detail::list_files(base / "c")) {
            ok = false;
            bad += std::string(" ") + to_string(c.experiment) + ":file-set";
            continue;
        }
        for (const auto &f : fa) {
            ++files;
            for (const char *other : {"b", "c"}) {
                std::string a = detail::read_file(base / "a" / f);
                std::string b = detail::read_file(base / other / f);
                if (f == "config.json") {
                    // Snapshots differ only in where they were written.
                    a = detail::without_output_dir(a);
                    b = detail::without_output_dir(b);
                }
                if (a != b) {
                    ok = false;
                    bad += std::string(" ") + other + ":" + to_string(c.experiment) + "/" + f;
                }
            }
        }
    }
    return {9, "determinism", ok,
            std::to_string(files) + " files from 5 experiments compared across rerun and config replay" +
                (bad.empty() ? std::string(", all identical") : ", differing:" + bad),
            0.0};
}

// ---------------------------------------------------------------------------
// 10. Lagrange-descent convexity
// ---------------------------------------------------------------------------

inline CriterionResult lagrange_convexity(const VerifyOptions &o) {
    constexpr double kTol = -1e-8;
    Rng rng = make_stream(o.seed, "lagrange-convexity");
    const QhbmModel model(2, 1);
    double worst = std::numeric_limits<double>::infinity();
    double worst_threshold = 0.0;
    int instances = 0;
    for (int t = 0; t < 10; ++t) {
        const RealVector omega = model.random_params(rng, 0.7);
        const HermitianOperator h(detail::random_hermitian(4, rng));
        const auto loss_grad = [&](const RealVector &w) { return vqt_loss(model, w, h, 1.0).gradient(); };
        const RealMatrix h_loss = detail::fd_hessian(loss_grad, omega);
        const RealMatrix metric = bkm_info_qhbm(model, omega).entries;
        const double metric_min = min_eigenvalue(metric);
        if (metric_min <= 1e-10) {
            continue;
        }
        const double threshold = std::max(0.0, -min_eigenvalue(h_loss)) / metric_min;
        const double lambda = 1.1 * threshold + 1e-12;
        const QhbmPoint anchor = evaluate(model, omega);
        const auto composite = [&](const RealVector &w) {
            return RealVector(loss_grad(w) +
                              lambda * relative_entropy_from_anchor_grad(model, evaluate(model, w), anchor).gradient());
        };
        const double m = min_eigenvalue(detail::fd_hessian(composite, omega));
        if (m < worst) {
            worst = m;
            worst_threshold = threshold;
        }
        ++instances;
    }
    const bool ok = instances >= 10 && worst >= kTol;
    return {10, "Lagrange convexity", ok,
            std::to_string(instances) + " 2-qubit instances at lambda = 1.1 x threshold: min eig of composite "
                                        "Hessian " +
                detail::num(worst) + " (threshold there " + detail::num(worst_threshold) + "; tol -1e-8)",
            0.0};
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

inline CriterionResult run_criterion(int id, const VerifyOptions &o) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    CriterionResult r;
    try {
        switch (id) {
        case 1:
            r = gradient_oracles(o);
            break;
        case 2:
            r = metric_oracles(o);
            break;
        case 3:
            r = third_order_symmetry(o);
            break;
        case 4:
            r = mirror_duality(o);
            break;
        case 5:
            r = fisher_efficiency(o);
            break;
        case 6:
            r = vqt_convergence_criterion(o);
            break;
        case 7:
            r = sequence_ordering(o);
            break;
        case 8:
            r = trotter_fidelity(o);
            break;
        case 9:
            r = determinism(o);
            break;
        case 10:
            r = lagrange_convexity(o);
            break;
        default:
            throw Error("no criterion " + std::to_string(id));
        }
    } catch (const std::exception &e) {
        r = {id, "criterion " + std::to_string(id), false, std::string("error: ") + e.what(), 0.0};
    }
    r.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return r;
}

/// One line: "PASS  6 VQT convergence (12.3 s): detail".
inline std::string format_line(const CriterionResult &r) {
    std::ostringstream os;
    os << (r.passed ? "PASS" : "FAIL") << ' ' << std::setw(2) << r.id << ' ' << r.name << " (" << std::fixed
       << std::setprecision(1) << r.seconds << " s): " << r.detail;
    return os.str();
}

} // namespace qpgeo::verify

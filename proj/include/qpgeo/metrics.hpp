#pragma once

// Information matrices of parameterized mixed states for the BKM and BH
// monotone metrics. Two independent routes are provided: the spectral
// representation on explicit tangent vectors, and the block formulas on QHBMs
// that only need shifted circuits.

#include "qpgeo/estimators.hpp"
#include "qpgeo/qhbm.hpp"
#include "qpgeo/states.hpp"

#include <limits>

namespace qpgeo {

enum class MetricKind { bkm, bh };

inline const char *to_string(MetricKind k) { return k == MetricKind::bkm ? "bkm" : "bh"; }

inline MetricKind metric_kind_from_string(const std::string &s) {
    if (s == "bkm") {
        return MetricKind::bkm;
    }
    if (s == "bh") {
        return MetricKind::bh;
    }
    throw Error("unknown metric kind '" + s + "'");
}

/// Symmetric PSD matrix of a metric, resolved in some coordinate chart.
struct InformationMatrix {
    RealMatrix entries;
    MetricKind kind = MetricKind::bkm;
    RealVector params_snapshot;

    [[nodiscard]] Eigen::Index dim() const { return entries.rows(); }

    [[nodiscard]] RealVector eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<RealMatrix> s(entries, Eigen::EigenvaluesOnly);
        return s.eigenvalues();
    }

    /// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
    [[nodiscard]] double condition_number() const {
        const RealVector ev = eigenvalues();
        if (ev.size() == 0) {
            return 1.0;
        }
        const double lo = ev.minCoeff();
        return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
    }
};

inline InformationMatrix make_information_matrix(RealMatrix m, MetricKind kind, RealVector snapshot = {}) {
    require(m.rows() == m.cols(), "information matrix must be square");
    const double scale = m.size() ? std::max(m.cwiseAbs().maxCoeff(), 1.0) : 1.0;
    require(m.size() == 0 || (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
            "information matrix not symmetric");
    RealMatrix sym = 0.5 * (m + m.transpose());
    return {std::move(sym), kind, std::move(snapshot)};
}

/// Eigenvalue weight c(x, y); c(x, x) = 1/x for both kinds.
inline double metric_weight(MetricKind kind, double x, double y) {
    if (kind == MetricKind::bh) {
        return 2.0 / (x + y);
    }
    if (std::abs(x - y) < 1e-12 * std::max(x, y)) {
        return 1.0 / x;
    }
    return (std::log(x) - std::log(y)) / (x - y);
}

namespace detail {

inline Spectrum full_rank_spectrum(const DensityOperator &rho) {
    Spectrum s = rho.spectrum();
    if (s.values.minCoeff() <= kEigenFloor) {
        throw Error("singular state");
    }
    return s;
}

inline void check_tangent(const ComplexMatrix &t, Eigen::Index dim) {
    require(t.rows() == dim && t.cols() == dim, "tangent has wrong dimension");
    const double scale = std::max(max_abs(t), 1.0);
    require(max_abs(t - t.adjoint()) <= 1e-8 * scale, "tangent not Hermitian");
    require(std::abs(t.trace()) <= 1e-8 * scale * static_cast<double>(dim), "tangent not traceless");
}

inline RealMatrix weight_table(MetricKind kind, const RealVector &p) {
    const Eigen::Index d = p.size();
    RealMatrix c(d, d);
    for (Eigen::Index x = 0; x < d; ++x) {
        for (Eigen::Index y = 0; y < d; ++y) {
            c(x, y) = metric_weight(kind, p(x), p(y));
        }
    }
    return c;
}

/// sum_{x,y} c_xy A_xy B_yx, real part, for Hermitian A, B.
inline double weighted_pair(const RealMatrix &c, const ComplexMatrix &a, const ComplexMatrix &b) {
    return (c.cast<cplx>().cwiseProduct(a).cwiseProduct(b.transpose())).sum().real();
}

} // namespace detail

/**
 * Spectral-representation oracle:
 *   I_jk = sum_{x,y} c(p_x, p_y) <x|H_j|y><y|H_k|x>
 * in the eigenbasis of rho, for traceless Hermitian tangents H_j.
 */
inline InformationMatrix info_matrix_oracle(const std::vector<ComplexMatrix> &tangents,
                                            const DensityOperator &rho, MetricKind kind) {
    const Spectrum s = detail::full_rank_spectrum(rho);
    const RealMatrix c = detail::weight_table(kind, s.values);
    std::vector<ComplexMatrix> rotated;
    rotated.reserve(tangents.size());
    for (const auto &t : tangents) {
        detail::check_tangent(t, rho.dim());
        rotated.push_back(s.vectors.adjoint() * t * s.vectors);
    }
    const auto d = static_cast<Eigen::Index>(tangents.size());
    RealMatrix m(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = j; k < d; ++k) {
            m(j, k) = m(k, j) = detail::weighted_pair(c, rotated[j], rotated[k]);
        }
    }
    return make_information_matrix(std::move(m), kind);
}

/// Lowering operator applied to a tangent: the logarithmic derivative of the metric.
inline ComplexMatrix logarithmic_derivative(const DensityOperator &rho, const ComplexMatrix &tangent,
                                            MetricKind kind) {
    const Spectrum s = detail::full_rank_spectrum(rho);
    const RealMatrix c = detail::weight_table(kind, s.values);
    const ComplexMatrix t = s.vectors.adjoint() * tangent * s.vectors;
    const ComplexMatrix l = c.cast<cplx>().cwiseProduct(t);
    return s.vectors * l * s.vectors.adjoint();
}

/**
 * tr[A_j R(A_k)] - tr(rho A_j) tr(rho A_k), with the raising operator R of the
 * metric: the logarithmic mean for BKM and the symmetrized product for BH.
 */
inline RealMatrix generalized_covariance(const std::vector<ComplexMatrix> &observables,
                                         const DensityOperator &rho, MetricKind kind) {
    const Spectrum s = detail::full_rank_spectrum(rho);
    const RealMatrix c = detail::weight_table(kind, s.values).cwiseInverse();
    std::vector<ComplexMatrix> rotated;
    RealVector means(static_cast<Eigen::Index>(observables.size()));
    for (std::size_t j = 0; j < observables.size(); ++j) {
        require(is_hermitian(observables[j], 1e-8), "observable not Hermitian");
        rotated.push_back(s.vectors.adjoint() * observables[j] * s.vectors);
        means(static_cast<Eigen::Index>(j)) =
            (rotated.back().diagonal().real().array() * s.values.array()).sum();
    }
    const auto d = static_cast<Eigen::Index>(observables.size());
    RealMatrix m(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = j; k < d; ++k) {
            m(j, k) = m(k, j) = detail::weighted_pair(c, rotated[j], rotated[k]) - means(j) * means(k);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// QHBM tangents, oracle route
// ---------------------------------------------------------------------------

/**
 * d rho / d Omega_j for every parameter. theta tangents are U diag(dp) U^dag;
 * phi tangents are i[P~_k, rho] with the dressed generators P~_k.
 */
inline std::vector<ComplexMatrix> qhbm_tangents(const QhbmModel &model, const RealVector &omega) {
    const QhbmPoint pt = evaluate(model, omega);
    const RealMatrix &g = model.energy_gradients();
    const RealVector mean_grad = g.transpose() * pt.probabilities;
    std::vector<ComplexMatrix> out;
    out.reserve(static_cast<std::size_t>(model.n_params()));
    for (Eigen::Index k = 0; k < model.n_theta(); ++k) {
        const RealVector dp = pt.probabilities.array() * (mean_grad(k) - g.col(k).array());
        out.push_back(pt.unitary * dp.cast<cplx>().asDiagonal() * pt.unitary.adjoint());
    }
    const ComplexMatrix rho = pt.density();
    const auto suffix = suffix_unitaries(model.circuit(), pt.phi);
    const auto dressed = dressed_generators(model.circuit(), pt.phi, suffix);
    const cplx i_unit{0.0, 1.0};
    for (const auto &p : dressed) {
        out.push_back(i_unit * (p * rho - rho * p));
    }
    return out;
}

inline InformationMatrix info_matrix_oracle_qhbm(const QhbmModel &model, const RealVector &omega,
                                                 MetricKind kind) {
    InformationMatrix m =
        info_matrix_oracle(qhbm_tangents(model, omega), qhbm_density(model, omega), kind);
    m.params_snapshot = omega;
    return m;
}

// ---------------------------------------------------------------------------
// Block assembly
// ---------------------------------------------------------------------------

namespace detail {

/// Cov_p of the energy gradients, exact or from EBM samples (unbiased).
inline RealMatrix energy_gradient_covariance(const RealMatrix &g, const RealVector &p, const EvalMode &mode) {
    if (mode.is_exact()) {
        const RealVector mean = g.transpose() * p;
        return g.transpose() * p.asDiagonal() * g - mean * mean.transpose();
    }
    require(mode.shots >= 2, "covariance estimate needs at least two shots");
    const Eigen::Index c = g.cols();
    RealVector sum = RealVector::Zero(c);
    RealMatrix outer = RealMatrix::Zero(c, c);
    for (std::size_t s = 0; s < mode.shots; ++s) {
        const std::uint32_t x = sample_categorical(p, mode.generator());
        const RealVector row = g.row(x).transpose();
        sum += row;
        outer += row * row.transpose();
    }
    const auto n = static_cast<double>(mode.shots);
    return (outer - sum * sum.transpose() / n) / (n - 1.0);
}

/// Diagonal <x| U^dag rho_a U |x>, exact or estimated by computational-basis
/// counts after undoing U.
inline RealVector pulled_back_diagonal(const ComplexMatrix &u, const ComplexMatrix &v_a, const RealVector &p,
                                       const EvalMode &mode) {
    const ComplexMatrix m = u.adjoint() * v_a;
    if (mode.is_exact()) {
        return m.cwiseAbs2() * p;
    }
    RealVector counts = RealVector::Zero(p.size());
    for (std::size_t s = 0; s < mode.shots; ++s) {
        const std::uint32_t x = sample_categorical(p, mode.generator());
        counts(sample_amplitudes(m.col(x).data(), m.rows(), mode.generator())) += 1.0;
    }
    return counts / static_cast<double>(mode.shots);
}

/**
 * All matrix elements of U^dag rho_a U, estimated with one measurement
 * setting for the diagonal and one per real and imaginary off-diagonal part.
 * Each setting uses `shots` shots.
 */
inline ComplexMatrix pulled_back_tomography(const ComplexMatrix &u, const ComplexMatrix &v_a, const RealVector &p,
                                            std::size_t shots, Rng &rng) {
    const ComplexMatrix m = u.adjoint() * v_a;
    const Eigen::Index d = m.rows();
    ComplexMatrix est = ComplexMatrix::Zero(d, d);
    const auto n = static_cast<double>(shots);
    for (std::size_t s = 0; s < shots; ++s) {
        const std::uint32_t x = sample_categorical(p, rng);
        const std::uint32_t y = sample_amplitudes(m.col(x).data(), d, rng);
        est(y, y) += 1.0 / n;
    }
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = a + 1; b < d; ++b) {
            double re = 0.0;
            double im = 0.0;
            for (std::size_t s = 0; s < shots; ++s) {
                const std::uint32_t x = sample_categorical(p, rng);
                const cplx pa = m(a, x);
                const cplx pb = m(b, x);
                // Re part: eigenvectors (|a> +/- |b>)/sqrt2 with eigenvalues +/- 1/2.
                const double up = 0.5 * std::norm(pa + pb);
                const double dn = 0.5 * std::norm(pa - pb);
                const double u1 = uniform01(rng);
                re += u1 < up ? 0.5 : (u1 < up + dn ? -0.5 : 0.0);
            }
            for (std::size_t s = 0; s < shots; ++s) {
                const std::uint32_t x = sample_categorical(p, rng);
                const cplx pa = m(a, x);
                const cplx pb = m(b, x);
                // Im part of <a|rho|b>: eigenvectors (|a> -/+ i|b>)/sqrt2, eigenvalues +/- 1/2.
                const cplx iu{0.0, 1.0};
                const double up = 0.5 * std::norm(pa + iu * pb);
                const double dn = 0.5 * std::norm(pa - iu * pb);
                const double u1 = uniform01(rng);
                im += u1 < up ? 0.5 : (u1 < up + dn ? -0.5 : 0.0);
            }
            est(a, b) = cplx{re / n, im / n};
            est(b, a) = std::conj(est(a, b));
        }
    }
    return est;
}

} // namespace detail

/**
 * BKM information matrix of a QHBM from its three blocks:
 *   theta-theta: Cov_p(grad E, grad E);
 *   phi-phi:     the four double-shift traces tr[rho_{+-j} K_{+-k}];
 *   phi-theta:   the two shifted traces against dK/dtheta in the computational frame.
 * Shot mode replaces every trace by a sample mean of `mode.shots` shots.
 */
inline InformationMatrix bkm_info_qhbm(const QhbmModel &model, const RealVector &omega,
                                       const EvalMode &mode = EvalMode::exact()) {
    const QhbmPoint pt = evaluate(model, omega);
    const Eigen::Index c = model.n_theta();
    const Eigen::Index q = model.n_phi();
    const RealMatrix &g = model.energy_gradients();
    RealMatrix m = RealMatrix::Zero(c + q, c + q);
    m.topLeftCorner(c, c) = detail::energy_gradient_covariance(g, pt.probabilities, mode);

    if (mode.is_exact()) {
        const auto suffix = suffix_unitaries(model.circuit(), pt.phi);
        const ShiftedMatrices rho = shifted_push_forwards(model.circuit(), pt.phi, pt.probabilities, suffix);
        const ShiftedMatrices kk = shifted_push_forwards(model.circuit(), pt.phi, pt.energies, suffix);
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto js = static_cast<std::size_t>(j);
            for (Eigen::Index k = j; k < q; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                const double v = -trace_product(rho.plus[js], kk.plus[ks]).real() -
                                 trace_product(rho.minus[js], kk.minus[ks]).real() +
                                 trace_product(rho.plus[js], kk.minus[ks]).real() +
                                 trace_product(rho.minus[js], kk.plus[ks]).real();
                m(c + j, c + k) = m(c + k, c + j) = v;
            }
            const ComplexMatrix pulled_plus = pt.unitary.adjoint() * rho.plus[js] * pt.unitary;
            const ComplexMatrix pulled_minus = pt.unitary.adjoint() * rho.minus[js] * pt.unitary;
            const RealVector diff = pulled_plus.diagonal().real() - pulled_minus.diagonal().real();
            const RealVector cross = -(g.transpose() * diff);
            m.block(c + j, 0, 1, c) = cross.transpose();
            m.block(0, c + j, c, 1) = cross;
        }
        return make_information_matrix(std::move(m), MetricKind::bkm, omega);
    }

    const ShiftedUnitaries su = shifted_unitaries(model.circuit(), pt.phi);
    Rng &rng = mode.generator();
    for (Eigen::Index j = 0; j < q; ++j) {
        const auto js = static_cast<std::size_t>(j);
        for (Eigen::Index k = j; k < q; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const auto tr = [&](const ComplexMatrix &va, const ComplexMatrix &vb) {
                return sampled_trace(va, pt.probabilities, vb, pt.energies, mode.shots, rng);
            };
            const double v = -tr(su.plus[js], su.plus[ks]) - tr(su.minus[js], su.minus[ks]) +
                             tr(su.plus[js], su.minus[ks]) + tr(su.minus[js], su.plus[ks]);
            m(c + j, c + k) = m(c + k, c + j) = v;
        }
        const RealVector diff = detail::pulled_back_diagonal(pt.unitary, su.plus[js], pt.probabilities, mode) -
                                detail::pulled_back_diagonal(pt.unitary, su.minus[js], pt.probabilities, mode);
        const RealVector cross = -(g.transpose() * diff);
        m.block(c + j, 0, 1, c) = cross.transpose();
        m.block(0, c + j, c, 1) = cross;
    }
    return make_information_matrix(std::move(m), MetricKind::bkm, omega);
}

/**
 * BH information matrix of a QHBM. The theta block is the classical Fisher
 * matrix; the phi blocks weight matrix elements of the shifted-state
 * differences in the eigenbasis of rho by 2/(p_x + p_y).
 */
inline InformationMatrix bh_info_qhbm(const QhbmModel &model, const RealVector &omega,
                                      const EvalMode &mode = EvalMode::exact()) {
    const QhbmPoint pt = evaluate(model, omega);
    const Eigen::Index c = model.n_theta();
    const Eigen::Index q = model.n_phi();
    const RealMatrix &g = model.energy_gradients();
    const RealVector &p = pt.probabilities;
    RealMatrix m = RealMatrix::Zero(c + q, c + q);
    m.topLeftCorner(c, c) = detail::energy_gradient_covariance(g, p, mode);
    const RealMatrix w = detail::weight_table(MetricKind::bh, p);
    const RealVector mean_grad = g.transpose() * p;

    // diffs_a[j] = U^dag (rho_{+j} - rho_{-j}) U; diffs_b an independent copy in shot mode.
    std::vector<ComplexMatrix> diffs_a;
    std::vector<ComplexMatrix> diffs_b;
    if (mode.is_exact()) {
        const auto suffix = suffix_unitaries(model.circuit(), pt.phi);
        const ShiftedMatrices rho = shifted_push_forwards(model.circuit(), pt.phi, p, suffix);
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto js = static_cast<std::size_t>(j);
            diffs_a.push_back(pt.unitary.adjoint() * (rho.plus[js] - rho.minus[js]) * pt.unitary);
        }
        diffs_b = diffs_a;
    } else {
        const ShiftedUnitaries su = shifted_unitaries(model.circuit(), pt.phi);
        Rng &rng = mode.generator();
        for (int copy = 0; copy < 2; ++copy) {
            auto &dst = copy == 0 ? diffs_a : diffs_b;
            for (Eigen::Index j = 0; j < q; ++j) {
                const auto js = static_cast<std::size_t>(j);
                dst.push_back(detail::pulled_back_tomography(pt.unitary, su.plus[js], p, mode.shots, rng) -
                              detail::pulled_back_tomography(pt.unitary, su.minus[js], p, mode.shots, rng));
            }
        }
    }
    for (Eigen::Index j = 0; j < q; ++j) {
        const auto js = static_cast<std::size_t>(j);
        for (Eigen::Index k = j; k < q; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const double v = 0.5 * (detail::weighted_pair(w, diffs_a[js], diffs_b[ks]) +
                                    detail::weighted_pair(w, diffs_b[js], diffs_a[ks]));
            m(c + j, c + k) = m(c + k, c + j) = v;
        }
        // <phi(x)|d_theta rho|phi(x)> / p_x = <dE> - dE(x).
        const RealVector dd = diffs_a[js].diagonal().real();
        const RealVector cross = mean_grad * dd.sum() - g.transpose() * dd;
        m.block(c + j, 0, 1, c) = cross.transpose();
        m.block(0, c + j, c, 1) = cross;
    }
    return make_information_matrix(std::move(m), MetricKind::bh, omega);
}

inline InformationMatrix info_matrix_qhbm(const QhbmModel &model, const RealVector &omega, MetricKind kind,
                                          const EvalMode &mode = EvalMode::exact()) {
    return kind == MetricKind::bkm ? bkm_info_qhbm(model, omega, mode) : bh_info_qhbm(model, omega, mode);
}

/// D(rho_a || rho_b) between two QHBM points using their known spectra.
inline double qhbm_relative_entropy(const QhbmPoint &a, const QhbmPoint &b) {
    const ComplexMatrix kb = b.modular_hamiltonian();
    const double cross = trace_product(a.density(), kb).real() + b.log_partition;
    return -shannon_entropy(a.probabilities) + cross;
}

/**
 * Max entrywise deviation between bkm_info_qhbm and the negated mixed
 * central-difference Hessian -d^2/dOmega'_j dOmega_k D(rho_Omega' || rho_Omega).
 */
inline double bkm_hessian_check(const QhbmModel &model, const RealVector &omega, double h) {
    require(h >= 1e-6 && h <= 1e-3, "finite-difference step must be in [1e-6, 1e-3]");
    const Eigen::Index d = model.n_params();
    std::vector<QhbmPoint> plus;
    std::vector<QhbmPoint> minus;
    for (Eigen::Index j = 0; j < d; ++j) {
        RealVector w = omega;
        w(j) += h;
        plus.push_back(evaluate(model, w));
        w(j) -= 2.0 * h;
        minus.push_back(evaluate(model, w));
    }
    RealMatrix fd(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto js = static_cast<std::size_t>(j);
        for (Eigen::Index k = 0; k < d; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const double v = qhbm_relative_entropy(plus[js], plus[ks]) - qhbm_relative_entropy(plus[js], minus[ks]) -
                             qhbm_relative_entropy(minus[js], plus[ks]) + qhbm_relative_entropy(minus[js], minus[ks]);
            fd(j, k) = -v / (4.0 * h * h);
        }
    }
    return (fd - bkm_info_qhbm(model, omega).entries).cwiseAbs().maxCoeff();
}

} // namespace qpgeo

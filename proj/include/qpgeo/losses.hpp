#pragma once

// VQT (free energy) and QMHL (cross entropy) losses on QHBMs with exact and
// shot-based gradients. The classical entropy term and the EBM averages of
// grad E are always exact; only traces that need the quantum device are sampled.

#include "qpgeo/estimators.hpp"
#include "qpgeo/qhbm.hpp"
#include "qpgeo/states.hpp"

namespace qpgeo {

struct LossEvaluation {
    double value = 0.0;
    RealVector grad_theta;
    RealVector grad_phi;
    std::size_t shots_used = 0;

    [[nodiscard]] RealVector gradient() const {
        RealVector g(grad_theta.size() + grad_phi.size());
        g << grad_theta, grad_phi;
        return g;
    }
};

/// An observable together with its eigendecomposition (needed to simulate measurements).
struct Observable {
    ComplexMatrix matrix;
    Spectrum spectrum;

    Observable() = default;
    explicit Observable(const HermitianOperator &h) : matrix(h.matrix()), spectrum(eigh(h)) {}
    Observable(ComplexMatrix m, Spectrum s) : matrix(std::move(m)), spectrum(std::move(s)) {}
};

/// A QHBM point viewed as an observable source: K = U diag(E) U^dag.
inline Observable modular_observable(const QhbmPoint &pt) {
    return {pt.modular_hamiltonian(), Spectrum{pt.energies, pt.unitary}};
}

namespace detail {

inline LossEvaluation vqt_exact(const QhbmModel &model, const QhbmPoint &pt, const ComplexMatrix &h, double beta) {
    const RealMatrix &g = model.energy_gradients();
    const RealVector &p = pt.probabilities;
    const RealVector h_phi = (pt.unitary.adjoint() * h * pt.unitary).diagonal().real();
    const RealVector f = beta * h_phi - pt.energies;
    LossEvaluation out;
    out.value = -shannon_entropy(p) + beta * p.dot(h_phi);
    out.grad_theta = p.dot(f) * (g.transpose() * p) - g.transpose() * (p.array() * f.array()).matrix();
    out.grad_phi = beta * shifted_expectations(model.circuit(), pt.phi, p, h).difference();
    return out;
}

inline LossEvaluation vqt_sampled(const QhbmModel &model, const QhbmPoint &pt, const Observable &h, double beta,
                                  const EvalMode &mode) {
    const RealMatrix &g = model.energy_gradients();
    const RealVector &p = pt.probabilities;
    const Eigen::Index q = model.n_phi();
    const std::size_t per = shots_per_part(mode.shots, 1 + 2 * static_cast<std::size_t>(q));
    Rng &rng = mode.generator();
    const RealVector mean_grad = g.transpose() * p;
    const ComplexMatrix m = h.spectrum.vectors.adjoint() * pt.unitary;

    LossEvaluation out;
    double h_mean = 0.0;
    out.grad_theta = RealVector::Zero(model.n_theta());
    for (std::size_t s = 0; s < per; ++s) {
        const std::uint32_t x = sample_categorical(p, rng);
        const double hv = h.spectrum.values(sample_amplitudes(m.col(x).data(), m.rows(), rng));
        h_mean += hv;
        out.grad_theta += (beta * hv - pt.energies(x)) * (mean_grad - g.row(x).transpose());
    }
    const auto n = static_cast<double>(per);
    out.value = -shannon_entropy(p) + beta * h_mean / n;
    out.grad_theta /= n;
    const ShiftedUnitaries su = shifted_unitaries(model.circuit(), pt.phi);
    out.grad_phi.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double plus = sampled_trace(su.plus[ks], p, h.spectrum.vectors, h.spectrum.values, per, rng);
        const double minus = sampled_trace(su.minus[ks], p, h.spectrum.vectors, h.spectrum.values, per, rng);
        out.grad_phi(k) = beta * (plus - minus);
    }
    out.shots_used = per * (1 + 2 * static_cast<std::size_t>(q));
    return out;
}

} // namespace detail

/**
 * VQT loss -S(rho_theta) + beta tr(rho_Omega H) and its gradients:
 *   d/dtheta = <beta H_phi - E><grad E> - <(beta H_phi - E) grad E>,  H_phi(x) = <x|U^dag H U|x>;
 *   d/dphi_k = beta (tr rho_{+k} H - tr rho_{-k} H).
 */
inline LossEvaluation vqt_loss(const QhbmModel &model, const QhbmPoint &pt, const Observable &h, double beta,
                               const EvalMode &mode = EvalMode::exact()) {
    require(beta >= 0.0, "inverse temperature must be non-negative");
    require(h.matrix.rows() == static_cast<Eigen::Index>(dim_of(model.n_qubits())),
            "Hamiltonian dimension does not match the model");
    if (mode.is_exact()) {
        return detail::vqt_exact(model, pt, h.matrix, beta);
    }
    return detail::vqt_sampled(model, pt, h, beta, mode);
}

inline LossEvaluation vqt_loss(const QhbmModel &model, const RealVector &omega, const HermitianOperator &h,
                               double beta, const EvalMode &mode = EvalMode::exact()) {
    const QhbmPoint pt = evaluate(model, omega);
    if (mode.is_exact()) {
        require(beta >= 0.0, "inverse temperature must be non-negative");
        require(h.dim() == static_cast<Eigen::Index>(dim_of(model.n_qubits())),
                "Hamiltonian dimension does not match the model");
        return detail::vqt_exact(model, pt, h.matrix(), beta);
    }
    return vqt_loss(model, pt, Observable(h), beta, mode);
}

// ---------------------------------------------------------------------------
// QMHL
// ---------------------------------------------------------------------------

/// A data state with its eigendecomposition, so eigenstates can be sampled.
struct DataState {
    DensityOperator rho;
    Spectrum spectrum;

    explicit DataState(DensityOperator r) : rho(std::move(r)), spectrum(rho.spectrum()) {
        spectrum.values = spectrum.values.cwiseMax(0.0);
        spectrum.values /= spectrum.values.sum();
    }

    /// One eigenstate draw |d_i> with probability lambda_i.
    [[nodiscard]] ComplexVector sample(Rng &rng) const {
        return spectrum.vectors.col(sample_categorical(spectrum.values, rng));
    }
};

/**
 * QMHL loss tr(sigma K_Omega) + ln Z_theta and its gradients:
 *   d/dtheta = E_{x ~ <x|U^dag sigma U|x>}[grad E] - E_{p_theta}[grad E];
 *   d/dphi_k = tr(sigma K_{+k}) - tr(sigma K_{-k}).
 */
inline LossEvaluation qmhl_loss(const QhbmModel &model, const QhbmPoint &pt, const DataState &data,
                                const EvalMode &mode = EvalMode::exact()) {
    require(data.rho.dim() == pt.unitary.rows(), "data state dimension does not match the model");
    const RealMatrix &g = model.energy_gradients();
    const RealVector mean_grad = g.transpose() * pt.probabilities;
    LossEvaluation out;
    if (mode.is_exact()) {
        const ComplexMatrix &sigma = data.rho.matrix();
        const RealVector pulled = (pt.unitary.adjoint() * sigma * pt.unitary).diagonal().real();
        out.value = pulled.dot(pt.energies) + pt.log_partition;
        out.grad_theta = g.transpose() * pulled - mean_grad;
        out.grad_phi = shifted_expectations(model.circuit(), pt.phi, pt.energies, sigma).difference();
        return out;
    }
    const Eigen::Index q = model.n_phi();
    const std::size_t per = shots_per_part(mode.shots, 1 + 2 * static_cast<std::size_t>(q));
    Rng &rng = mode.generator();
    const auto ys = sampled_outcomes(data.spectrum.vectors, data.spectrum.values, pt.unitary, per, rng);
    double e_mean = 0.0;
    RealVector grad_mean = RealVector::Zero(model.n_theta());
    for (const std::uint32_t y : ys) {
        e_mean += pt.energies(y);
        grad_mean += g.row(y).transpose();
    }
    const auto n = static_cast<double>(per);
    out.value = e_mean / n + pt.log_partition;
    out.grad_theta = grad_mean / n - mean_grad;
    const ShiftedUnitaries su = shifted_unitaries(model.circuit(), pt.phi);
    out.grad_phi.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        out.grad_phi(k) =
            sampled_trace(data.spectrum.vectors, data.spectrum.values, su.plus[ks], pt.energies, per, rng) -
            sampled_trace(data.spectrum.vectors, data.spectrum.values, su.minus[ks], pt.energies, per, rng);
    }
    out.shots_used = per * (1 + 2 * static_cast<std::size_t>(q));
    return out;
}

inline LossEvaluation qmhl_loss(const QhbmModel &model, const RealVector &omega, const DensityOperator &data,
                                const EvalMode &mode = EvalMode::exact()) {
    return qmhl_loss(model, evaluate(model, omega), DataState(data), mode);
}

/// Single-copy theta-gradient estimate from one data sample |psi>: measure
/// U^dag|psi> in the computational basis and subtract the exact EBM mean.
inline RealVector qmhl_theta_gradient_online(const QhbmModel &model, const QhbmPoint &pt, const ComplexVector &psi,
                                             Rng &rng) {
    const RealMatrix &g = model.energy_gradients();
    const ComplexVector a = pt.unitary.adjoint() * psi;
    const std::uint32_t y = sample_amplitudes(a.data(), a.size(), rng);
    return g.row(y).transpose() - g.transpose() * pt.probabilities;
}

// ---------------------------------------------------------------------------
// Divergences to an anchor
// ---------------------------------------------------------------------------

/// A fixed reference QHBM state: its point data and modular Hamiltonian.
struct Anchor {
    QhbmPoint point;
    Observable modular;

    Anchor(const QhbmModel &model, const RealVector &omega)
        : point(evaluate(model, omega)), modular(modular_observable(point)) {}
};

/**
 * Gradient of D(rho_Omega || rho_anchor) = -S(rho_Omega) + tr(rho_Omega K_anchor) + ln Z_anchor,
 * i.e. the VQT gradient with H = K_anchor and beta = 1.
 */
inline LossEvaluation relative_entropy_to_anchor_grad(const QhbmModel &model, const QhbmPoint &pt,
                                                      const Anchor &anchor,
                                                      const EvalMode &mode = EvalMode::exact()) {
    LossEvaluation out = vqt_loss(model, pt, anchor.modular, 1.0, mode);
    out.value += anchor.point.log_partition;
    return out;
}

inline LossEvaluation relative_entropy_to_anchor_grad(const QhbmModel &model, const RealVector &omega,
                                                      const RealVector &anchor_omega,
                                                      const EvalMode &mode = EvalMode::exact()) {
    return relative_entropy_to_anchor_grad(model, evaluate(model, omega), Anchor(model, anchor_omega), mode);
}

/// Gradient of the reverse divergence D(rho_anchor || rho_Omega): a QMHL
/// gradient against the anchor state, with the value shifted by -S(anchor).
inline LossEvaluation relative_entropy_from_anchor_grad(const QhbmModel &model, const QhbmPoint &pt,
                                                        const QhbmPoint &anchor) {
    const RealMatrix &g = model.energy_gradients();
    const ComplexMatrix sigma = anchor.density();
    const RealVector pulled = (pt.unitary.adjoint() * sigma * pt.unitary).diagonal().real();
    LossEvaluation out;
    out.value = pulled.dot(pt.energies) + pt.log_partition - shannon_entropy(anchor.probabilities);
    out.grad_theta = g.transpose() * pulled - g.transpose() * pt.probabilities;
    out.grad_phi = shifted_expectations(model.circuit(), pt.phi, pt.energies, sigma).difference();
    return out;
}

} // namespace qpgeo

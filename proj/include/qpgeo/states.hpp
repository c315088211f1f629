#pragma once

// Density operators and the information quantities defined on them. All
// logarithms are natural, so entropies and divergences are in nats.

#include "qpgeo/operator_core.hpp"

#include <functional>
#include <span>

namespace qpgeo {

/// Positive, unit-trace Hermitian matrix on n qubits.
class DensityOperator {
  public:
    DensityOperator() = default;

    DensityOperator(ComplexMatrix m, int n_qubits) : n_qubits_(n_qubits) {
        const auto dim = static_cast<Eigen::Index>(dim_of(n_qubits));
        require(m.rows() == dim && m.cols() == dim, "density matrix has wrong dimension");
        require(m.allFinite(), "density matrix has non-finite entries");
        require(max_abs(m - m.adjoint()) <= 1e-10 * std::max(max_abs(m), 1e-300),
                "density matrix not Hermitian");
        require(std::abs(m.trace().real() - 1.0) <= 1e-10, "density matrix trace must be 1");
        m_ = 0.5 * (m + m.adjoint());
        require(eigh(m_).values.minCoeff() >= -1e-10, "density matrix not positive semidefinite");
    }

    /// Wraps a matrix known to be a state, normalizing its trace.
    static DensityOperator from_unnormalized(const ComplexMatrix &m, int n_qubits) {
        const double tr = m.trace().real();
        require(tr > 0.0, "cannot normalize an operator with non-positive trace");
        return {m / tr, n_qubits};
    }

    static DensityOperator maximally_mixed(int n_qubits) {
        const auto dim = static_cast<Eigen::Index>(dim_of(n_qubits));
        return {ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim), n_qubits};
    }

    static DensityOperator pure(const ComplexVector &psi, int n_qubits) {
        const ComplexVector unit = psi / psi.norm();
        return {unit * unit.adjoint(), n_qubits};
    }

    [[nodiscard]] const ComplexMatrix &matrix() const { return m_; }
    [[nodiscard]] int n_qubits() const { return n_qubits_; }
    [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
    [[nodiscard]] Spectrum spectrum() const { return eigh(m_); }
    [[nodiscard]] bool full_rank(double floor = kEigenFloor) const {
        return spectrum().values.minCoeff() > floor;
    }

  private:
    ComplexMatrix m_;
    int n_qubits_ = 0;
};

/// e^{-beta H} / tr e^{-beta H}, exponentiating shifted eigenvalues.
inline DensityOperator gibbs_state(const HermitianOperator &h, double beta, int n_qubits) {
    require(beta >= 0.0, "inverse temperature must be non-negative");
    const Spectrum s = eigh(h);
    const double shift = s.values.minCoeff();
    RealVector w = (-beta * (s.values.array() - shift)).exp();
    w /= w.sum();
    return {s.vectors * w.cast<cplx>().asDiagonal() * s.vectors.adjoint(), n_qubits};
}

/// ln tr e^{-beta H}.
inline double log_partition(const HermitianOperator &h, double beta) {
    const Spectrum s = eigh(h);
    const double shift = s.values.minCoeff();
    return -beta * shift + std::log((-beta * (s.values.array() - shift)).exp().sum());
}

/// Shannon entropy of a probability vector in nats, with 0 ln 0 = 0.
inline double shannon_entropy(const RealVector &p) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) > 0.0) {
            s -= p(k) * std::log(p(k));
        }
    }
    return s;
}

inline double von_neumann_entropy(const DensityOperator &rho) {
    return shannon_entropy(rho.spectrum().values.cwiseMax(0.0));
}

/// D(rho || sigma) = tr rho (ln rho - ln sigma); sigma must be full rank.
inline double relative_entropy(const DensityOperator &rho, const DensityOperator &sigma) {
    require(rho.dim() == sigma.dim(), "relative entropy of states of different size");
    const Spectrum ss = sigma.spectrum();
    if (ss.values.minCoeff() <= kEigenFloor) {
        throw Error("unsupported data state");
    }
    const ComplexMatrix log_sigma = ss.apply([](double x) { return std::log(x); });
    return -von_neumann_entropy(rho) - trace_product(rho.matrix(), log_sigma).real();
}

/// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const DensityOperator &rho, const DensityOperator &sigma) {
    require(rho.dim() == sigma.dim(), "fidelity of states of different size");
    const ComplexMatrix sqrt_rho =
        rho.spectrum().apply([](double x) { return std::sqrt(std::max(x, 0.0)); });
    const ComplexMatrix inner = sqrt_rho * sigma.matrix() * sqrt_rho;
    const RealVector ev = eigh(0.5 * (inner + inner.adjoint())).values;
    double tr = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
        tr += std::sqrt(std::max(ev(k), 0.0));
    }
    return std::clamp(tr * tr, 0.0, 1.0);
}

/// |D(rho(l) || rho(0)) - D(rho(0) || rho(l))| for each l in `lambdas`.
inline RealVector third_order_symmetry_gap(const std::function<DensityOperator(double)> &path,
                                           std::span<const double> lambdas) {
    const DensityOperator base = path(0.0);
    RealVector gaps(static_cast<Eigen::Index>(lambdas.size()));
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        const DensityOperator moved = path(lambdas[k]);
        gaps(static_cast<Eigen::Index>(k)) =
            std::abs(relative_entropy(moved, base) - relative_entropy(base, moved));
    }
    return gaps;
}

} // namespace qpgeo

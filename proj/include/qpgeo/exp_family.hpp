#pragma once

// Quantum exponential family rho_mu = exp(-sum_l mu_l E_l) / Z over a basis of
// pairwise HS-orthogonal Pauli strings, with mixture coordinates
// eta_j = tr(rho X_j) / 2.

#include "qpgeo/metrics.hpp"
#include "qpgeo/states.hpp"

namespace qpgeo {

class ExpFamilyModel {
  public:
    ExpFamilyModel() = default;

    ExpFamilyModel(std::vector<PauliString> basis, RealVector mu) : basis_(std::move(basis)), mu_(std::move(mu)) {
        require(!basis_.empty(), "exponential family needs a non-empty basis");
        n_ = basis_.front().n_qubits();
        require(mu_.size() == static_cast<Eigen::Index>(basis_.size()), "coefficient count does not match basis");
        const auto dim = static_cast<double>(dim_of(n_));
        for (const auto &p : basis_) {
            require(p.n_qubits() == n_, "basis strings have mixed qubit counts");
            require(!p.is_identity(), "basis strings must be non-identity");
            dense_.push_back(pauli_dense(PauliString(p.letters())));
        }
        for (std::size_t j = 0; j < dense_.size(); ++j) {
            for (std::size_t k = j; k < dense_.size(); ++k) {
                const double expected = j == k ? dim : 0.0;
                require(std::abs(trace_product(dense_[j], dense_[k]) - expected) <= 1e-10 * dim,
                        "basis strings must be HS-orthogonal");
            }
        }
    }

    [[nodiscard]] int n_qubits() const { return n_; }
    [[nodiscard]] Eigen::Index size() const { return mu_.size(); }
    [[nodiscard]] const std::vector<PauliString> &basis() const { return basis_; }
    [[nodiscard]] const std::vector<ComplexMatrix> &basis_dense() const { return dense_; }
    [[nodiscard]] const RealVector &mu() const { return mu_; }

    [[nodiscard]] ExpFamilyModel with_mu(RealVector mu) const {
        require(mu.size() == mu_.size(), "coefficient count does not match basis");
        ExpFamilyModel out = *this;
        out.mu_ = std::move(mu);
        return out;
    }

    /// A = sum_l mu_l E_l.
    [[nodiscard]] ComplexMatrix generator() const {
        const auto dim = static_cast<Eigen::Index>(dim_of(n_));
        ComplexMatrix a = ComplexMatrix::Zero(dim, dim);
        for (std::size_t l = 0; l < dense_.size(); ++l) {
            a += mu_(static_cast<Eigen::Index>(l)) * dense_[l];
        }
        return a;
    }

  private:
    std::vector<PauliString> basis_;
    std::vector<ComplexMatrix> dense_;
    RealVector mu_;
    int n_ = 0;
};

/// Mixture (expectation) coordinates over a basis.
struct MixtureCoords {
    std::vector<PauliString> basis;
    RealVector eta;
};

/// All 4^n - 1 non-identity Pauli strings, lexicographic over "IXYZ".
inline std::vector<PauliString> full_pauli_basis(int n_qubits) {
    require(n_qubits >= 1 && n_qubits <= 2, "full Pauli basis only for n <= 2");
    static constexpr char kLetters[] = {'I', 'X', 'Y', 'Z'};
    std::vector<PauliString> out;
    const int count = 1 << (2 * n_qubits);
    for (int code = 1; code < count; ++code) {
        std::string s;
        for (int q = n_qubits - 1; q >= 0; --q) {
            s.push_back(kLetters[(code >> (2 * q)) & 3]);
        }
        out.emplace_back(s);
    }
    return out;
}

namespace detail {

struct EfState {
    Spectrum spectrum; // of A = sum mu E
    RealVector probabilities;
    double log_partition = 0.0;
    ComplexMatrix rho;
};

inline EfState ef_state(const ExpFamilyModel &m) {
    EfState s;
    s.spectrum = eigh(m.generator());
    const double shift = s.spectrum.values.minCoeff();
    RealVector w = (-(s.spectrum.values.array() - shift)).exp();
    const double z = w.sum();
    s.probabilities = w / z;
    s.log_partition = -shift + std::log(z);
    s.rho = s.spectrum.vectors * s.probabilities.cast<cplx>().asDiagonal() * s.spectrum.vectors.adjoint();
    return s;
}

/// tr(rho E_l) for every basis element.
inline RealVector ef_expectations(const ExpFamilyModel &m, const ComplexMatrix &rho) {
    RealVector out(m.size());
    for (Eigen::Index l = 0; l < m.size(); ++l) {
        out(l) = trace_product(rho, m.basis_dense()[static_cast<std::size_t>(l)]).real();
    }
    return out;
}

/// Daleckii-Krein derivatives d rho / d mu_j of rho = exp(-A)/Z.
inline std::vector<ComplexMatrix> ef_tangents(const ExpFamilyModel &m, const EfState &s) {
    const Eigen::Index d = s.probabilities.size();
    const RealVector &a = s.spectrum.values;
    const RealVector &p = s.probabilities;
    // Divided differences of x -> p-weighted exp(-x) on the spectrum of A.
    RealMatrix dd(d, d);
    for (Eigen::Index x = 0; x < d; ++x) {
        for (Eigen::Index y = 0; y < d; ++y) {
            const double gap = a(x) - a(y);
            dd(x, y) = std::abs(gap) < 1e-12 * std::max(1.0, std::abs(a(x))) ? -p(x) : (p(x) - p(y)) / gap;
        }
    }
    std::vector<ComplexMatrix> out;
    const ComplexMatrix &v = s.spectrum.vectors;
    for (const auto &e : m.basis_dense()) {
        const ComplexMatrix rotated = v.adjoint() * e * v;
        ComplexMatrix de = dd.cast<cplx>().cwiseProduct(rotated);
        // Normalization: d rho = d(exp(-A))/Z - rho tr(d exp(-A))/Z.
        const cplx tr = de.trace();
        de -= tr * p.cast<cplx>().asDiagonal().toDenseMatrix();
        out.push_back(v * de * v.adjoint());
    }
    return out;
}

} // namespace detail

inline DensityOperator ef_density(const ExpFamilyModel &m) {
    return {detail::ef_state(m).rho, m.n_qubits()};
}

inline double ef_log_partition(const ExpFamilyModel &m) { return detail::ef_state(m).log_partition; }

inline MixtureCoords ef_to_mixture(const ExpFamilyModel &m) {
    return {m.basis(), 0.5 * detail::ef_expectations(m, detail::ef_state(m).rho)};
}

/// I/N + sum_j (2 eta_j / N) X_j; the state with these mixture coordinates
/// when the basis is complete.
inline ComplexMatrix mixture_density_matrix(const MixtureCoords &c) {
    require(!c.basis.empty(), "mixture coordinates need a basis");
    require(c.eta.size() == static_cast<Eigen::Index>(c.basis.size()), "eta length does not match basis");
    const int n = c.basis.front().n_qubits();
    const auto dim = static_cast<Eigen::Index>(dim_of(n));
    const double nd = static_cast<double>(dim);
    ComplexMatrix m = ComplexMatrix::Identity(dim, dim) / nd;
    for (std::size_t j = 0; j < c.basis.size(); ++j) {
        m += (2.0 * c.eta(static_cast<Eigen::Index>(j)) / nd) * pauli_dense(PauliString(c.basis[j].letters()));
    }
    return m;
}

/**
 * Inverse Legendre map eta -> mu: damped Newton on F(mu) = ln Z(mu) + 2 eta . mu,
 * whose gradient is 2(eta - eta(mu)) and Hessian the BKM matrix.
 */
inline ExpFamilyModel ef_from_mixture(const MixtureCoords &c, double tol = 1e-10, int max_iter = 200) {
    const ComplexMatrix recon = mixture_density_matrix(c);
    if (eigh(recon).values.minCoeff() <= kEigenFloor) {
        throw Error("outside mixture simplex");
    }
    ExpFamilyModel m(c.basis, RealVector::Zero(c.eta.size()));
    const auto objective = [&](const ExpFamilyModel &mm) {
        return ef_log_partition(mm) + 2.0 * c.eta.dot(mm.mu());
    };
    double f = objective(m);
    for (int it = 0; it < max_iter; ++it) {
        const detail::EfState s = detail::ef_state(m);
        const RealVector eta_mu = 0.5 * detail::ef_expectations(m, s.rho);
        const RealVector grad = 2.0 * (c.eta - eta_mu);
        const RealMatrix hess = info_matrix_oracle(detail::ef_tangents(m, s), DensityOperator(s.rho, m.n_qubits()),
                                                   MetricKind::bkm)
                                    .entries;
        const RealVector step = hess.ldlt().solve(grad);
        // Converged in mu, not only in eta: the map is ill-conditioned near the boundary.
        if (step.cwiseAbs().maxCoeff() <= tol) {
            break;
        }
        bool moved = false;
        double t = 1.0;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            ExpFamilyModel trial = m.with_mu(m.mu() - t * step);
            const double ft = objective(trial);
            // Near the optimum f is flat to rounding, so accept the full Newton step there.
            if (std::isfinite(ft) && (ft <= f || (halving == 0 && ft - f <= 1e-14 * std::max(1.0, std::abs(f))))) {
                m = std::move(trial);
                f = ft;
                moved = true;
                break;
            }
        }
        if (!moved) {
            break;
        }
    }
    const RealVector eta_mu = ef_to_mixture(m).eta;
    require((eta_mu - c.eta).cwiseAbs().maxCoeff() <= std::max(tol, 1e-8),
            "inverse mixture map did not converge");
    return m;
}

/// Tangents d rho / d mu_j (exact, Daleckii-Krein).
inline std::vector<ComplexMatrix> ef_tangents(const ExpFamilyModel &m) {
    return detail::ef_tangents(m, detail::ef_state(m));
}

/// BKM information matrix in exponential coordinates (= Hessian of ln Z).
inline InformationMatrix ef_bkm_info_matrix(const ExpFamilyModel &m) {
    const detail::EfState s = detail::ef_state(m);
    InformationMatrix out =
        info_matrix_oracle(detail::ef_tangents(m, s), DensityOperator(s.rho, m.n_qubits()), MetricKind::bkm);
    out.params_snapshot = m.mu();
    return out;
}

/// Exact gradient of D(sigma || rho_mu): tr(sigma E_j) - tr(rho_mu E_j).
inline RealVector ef_learning_gradient(const ExpFamilyModel &m, const DensityOperator &target) {
    require(target.dim() == static_cast<Eigen::Index>(dim_of(m.n_qubits())), "target dimension mismatch");
    const detail::EfState s = detail::ef_state(m);
    return detail::ef_expectations(m, target.matrix()) - detail::ef_expectations(m, s.rho);
}

/// Single-sample estimate <x|E_j|x> - tr(rho_mu E_j) from one target eigenstate sample |x>.
inline RealVector ef_learning_gradient_online(const ExpFamilyModel &m, const ComplexVector &sample) {
    const detail::EfState s = detail::ef_state(m);
    RealVector out(m.size());
    for (Eigen::Index l = 0; l < m.size(); ++l) {
        out(l) = sample.dot(m.basis_dense()[static_cast<std::size_t>(l)] * sample).real();
    }
    return out - detail::ef_expectations(m, s.rho);
}

/// Exact gradient of D(rho_mu || Gibbs(K, beta)) = tr(d rho_j (beta K - A)).
inline RealVector ef_simulation_gradient(const ExpFamilyModel &m, const HermitianOperator &k, double beta) {
    require(beta >= 0.0, "inverse temperature must be non-negative");
    const detail::EfState s = detail::ef_state(m);
    const ComplexMatrix w = beta * k.matrix() - m.generator();
    const auto tangents = detail::ef_tangents(m, s);
    RealVector out(m.size());
    for (Eigen::Index l = 0; l < m.size(); ++l) {
        out(l) = trace_product(tangents[static_cast<std::size_t>(l)], w).real();
    }
    return out;
}

/// Gradient in eta of D(rho_eta || rho_anchor) on a complete basis:
/// -2 (mu(eta) - mu_anchor).
inline RealVector ef_mixture_divergence_gradient(const MixtureCoords &at, const RealVector &anchor_mu,
                                                 double tol = 1e-12) {
    return -2.0 * (ef_from_mixture(at, tol).mu() - anchor_mu);
}

} // namespace qpgeo

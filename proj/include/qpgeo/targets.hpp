#pragma once

// Problem generators: open-chain transverse-field Ising Hamiltonians and their
// Gibbs states, Trotterized unitary channels, and Gaussian-process drives.

#include "qpgeo/rng.hpp"
#include "qpgeo/states.hpp"

#include <cmath>

namespace qpgeo {

struct TfimSpec {
    int n_qubits = 4;
    double j = 1.0;
    double lambda = 1.0;

    void validate() const {
        require(n_qubits >= 2, "TFIM needs at least two qubits");
        dim_of(n_qubits);
        require(std::isfinite(j) && std::isfinite(lambda), "TFIM couplings must be finite");
    }
};

/// Coupling part -J sum_i Z_i Z_{i+1}; diagonal in the computational basis.
inline HermitianOperator tfim_zz_part(const TfimSpec &spec) {
    spec.validate();
    std::vector<PauliString> terms;
    for (int i = 0; i + 1 < spec.n_qubits; ++i) {
        std::string s(static_cast<std::size_t>(spec.n_qubits), 'I');
        s[static_cast<std::size_t>(i)] = 'Z';
        s[static_cast<std::size_t>(i + 1)] = 'Z';
        terms.emplace_back(s, -spec.j);
    }
    return HermitianOperator(pauli_sum_dense(terms));
}

/// Field part -lambda sum_i X_i.
inline HermitianOperator tfim_x_part(const TfimSpec &spec) {
    spec.validate();
    std::vector<PauliString> terms;
    for (int i = 0; i < spec.n_qubits; ++i) {
        terms.push_back(PauliString::single(spec.n_qubits, i, 'X', -spec.lambda));
    }
    return HermitianOperator(pauli_sum_dense(terms));
}

/// H = -J sum_i Z_i Z_{i+1} - lambda sum_i X_i on an open chain.
inline HermitianOperator tfim_hamiltonian(const TfimSpec &spec) {
    return HermitianOperator(tfim_zz_part(spec).matrix() + tfim_x_part(spec).matrix());
}

inline DensityOperator tfim_gibbs_target(const TfimSpec &spec, double beta) {
    return gibbs_state(tfim_hamiltonian(spec), beta, spec.n_qubits);
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

enum class ChannelMode { trotter, exact };

/**
 * exp(-i dt H) for H = A + B, where A is the diagonal part of H in the
 * computational basis and B the rest (the ZZ and X sums for a TFIM).
 * Trotter mode applies `substeps` first- or second-order splitting steps.
 */
struct ChannelSpec {
    HermitianOperator hamiltonian;
    int n_qubits = 0;
    double dt = 0.0;
    int trotter_order = 2;
    int substeps = 1;
    ChannelMode mode = ChannelMode::trotter;

    void validate() const {
        require(hamiltonian.dim() == static_cast<Eigen::Index>(dim_of(n_qubits)),
                "channel Hamiltonian dimension does not match qubit count");
        require(dt >= 0.0 && std::isfinite(dt), "channel duration must be non-negative");
        require(trotter_order == 1 || trotter_order == 2, "Trotter order must be 1 or 2");
        require(substeps >= 1, "substeps must be at least 1");
    }
};

/// ceil(20 dt (|J| + |lambda|)), at least 1; the starting point of the calibrated default.
inline int default_substeps(double dt, double j, double lambda) {
    return std::max(1, static_cast<int>(std::ceil(20.0 * dt * (std::abs(j) + std::abs(lambda)))));
}

/// Exact exp(-i dt H).
inline ComplexMatrix exact_unitary(const ChannelSpec &c) {
    c.validate();
    return unitary_exp(c.hamiltonian, c.dt);
}

inline ComplexMatrix trotter_unitary(const ChannelSpec &c) {
    c.validate();
    if (c.mode == ChannelMode::exact) {
        return exact_unitary(c);
    }
    const ComplexMatrix &h = c.hamiltonian.matrix();
    const RealVector a = h.diagonal().real();
    ComplexMatrix b = h;
    b.diagonal().setZero();
    const HermitianOperator b_op(b);
    const double tau = c.dt / c.substeps;
    const auto diag_exp = [&](double t) {
        ComplexVector d(a.size());
        for (Eigen::Index x = 0; x < a.size(); ++x) {
            d(x) = std::polar(1.0, -t * a(x));
        }
        return d;
    };
    const ComplexMatrix eb = unitary_exp(b_op, tau);
    ComplexMatrix step;
    if (c.trotter_order == 1) {
        step = eb * diag_exp(tau).asDiagonal();
    } else {
        const ComplexVector half = diag_exp(0.5 * tau);
        step = half.asDiagonal() * eb * half.asDiagonal();
    }
    const auto dim = h.rows();
    ComplexMatrix u = ComplexMatrix::Identity(dim, dim);
    for (int s = 0; s < c.substeps; ++s) {
        u = step * u;
    }
    return u;
}

inline ComplexMatrix channel_unitary(const ChannelSpec &c) { return trotter_unitary(c); }

/// Largest singular value.
inline double operator_norm(const ComplexMatrix &m) {
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

inline double trotter_error(const ChannelSpec &c) { return operator_norm(trotter_unitary(c) - exact_unitary(c)); }

/**
 * Smallest substep count found, starting at `c.substeps`, with
 * ||U_trot - U_exact||_2 <= tol. Each refinement extrapolates the error with
 * the splitting order and overshoots by 10%; the result is deterministic.
 */
inline int calibrated_substeps(ChannelSpec c, double tol = 1e-3) {
    require(tol > 0.0, "Trotter tolerance must be positive");
    const ComplexMatrix exact = exact_unitary(c);
    for (int it = 0; it < 20; ++it) {
        const double err = operator_norm(trotter_unitary(c) - exact);
        if (err <= tol) {
            return c.substeps;
        }
        const double factor = std::pow(err / tol, 1.0 / c.trotter_order) * 1.1;
        c.substeps = std::max(c.substeps + 1, static_cast<int>(std::ceil(c.substeps * factor)));
    }
    throw Error("Trotter calibration did not reach the tolerance");
}

/// TFIM channel over `dt`; substeps = 0 selects the calibrated default (error <= 1e-3).
inline ChannelSpec tfim_channel(const TfimSpec &spec, double dt, int order = 2, int substeps = 0,
                                ChannelMode mode = ChannelMode::trotter) {
    ChannelSpec c{tfim_hamiltonian(spec), spec.n_qubits, dt, order,
                  substeps > 0 ? substeps : default_substeps(dt, spec.j, spec.lambda), mode};
    c.validate();
    if (substeps == 0 && mode == ChannelMode::trotter) {
        c.substeps = calibrated_substeps(c);
    }
    return c;
}

/// U rho U^dag, with trace drift above 1e-12 renormalized away.
inline DensityOperator apply_unitary(const ComplexMatrix &u, const DensityOperator &rho) {
    require(u.rows() == rho.dim() && u.cols() == rho.dim(), "channel dimension does not match state");
    ComplexMatrix out = u * rho.matrix() * u.adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    const double tr = out.trace().real();
    if (std::abs(tr - 1.0) > 1e-12) {
        out /= tr;
    }
    return {out, rho.n_qubits()};
}

inline DensityOperator apply_channel(const ChannelSpec &c, const DensityOperator &rho) {
    return apply_unitary(trotter_unitary(c), rho);
}

// ---------------------------------------------------------------------------
// Gaussian-process drives
// ---------------------------------------------------------------------------

struct GpDriveSpec {
    double amplitude = 1.0;
    double length_scale = 1.0;
    std::vector<double> times;
    double jitter = 1e-9;

    void validate() const {
        require(length_scale > 0.0, "GP length scale must be positive");
        require(jitter > 0.0, "GP jitter must be positive");
        for (std::size_t k = 1; k < times.size(); ++k) {
            require(times[k] > times[k - 1], "GP times must be strictly increasing");
        }
    }
};

/// Covariance A^2 exp(-(t - t')^2 / (2 s^2)) + jitter I.
inline RealMatrix gp_covariance(const GpDriveSpec &spec) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.times.size());
    RealMatrix k(n, n);
    const double a2 = spec.amplitude * spec.amplitude;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = spec.times[static_cast<std::size_t>(i)] - spec.times[static_cast<std::size_t>(j)];
            k(i, j) = a2 * std::exp(-d * d / (2.0 * spec.length_scale * spec.length_scale));
        }
        k(i, i) += spec.jitter;
    }
    return k;
}

/// One draw from N(0, K) through the symmetric square root of K.
inline RealVector gp_sample(const GpDriveSpec &spec, Rng &rng) {
    const RealMatrix k = gp_covariance(spec);
    const Eigen::Index n = k.rows();
    if (n == 0) {
        return {};
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(k);
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw Error("GP covariance not positive definite");
    }
    const RealMatrix root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                            es.eigenvectors().transpose();
    RealVector z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = standard_normal(rng);
    }
    return root * z;
}

/// Uniform partition of [0, total_time] into `intervals` pieces and the
/// channel for each, with J_k = J0 + g_J(t_k), lambda_k = lambda0 + g_lambda(t_k)
/// at the interval midpoints t_k, both processes drawn from the "gp-drive" stream.
struct DriveSequence {
    std::vector<double> midpoints;
    std::vector<TfimSpec> tfims;
    std::vector<ChannelSpec> channels;
};

inline DriveSequence gp_driven_channels(const TfimSpec &base, int intervals, double total_time, std::uint64_t seed,
                                        int order = 2, ChannelMode mode = ChannelMode::trotter,
                                        double amplitude = 1.0, double length_scale = 1.0) {
    require(intervals >= 1, "need at least one interval");
    require(total_time > 0.0, "total time must be positive");
    DriveSequence out;
    const double dt = total_time / intervals;
    for (int k = 0; k < intervals; ++k) {
        out.midpoints.push_back((k + 0.5) * dt);
    }
    const GpDriveSpec gp{amplitude, length_scale, out.midpoints, 1e-9};
    Rng rng_j = make_stream(seed, "gp-drive", 0);
    Rng rng_l = make_stream(seed, "gp-drive", 1);
    const RealVector gj = gp_sample(gp, rng_j);
    const RealVector gl = gp_sample(gp, rng_l);
    for (int k = 0; k < intervals; ++k) {
        TfimSpec s = base;
        s.j = base.j + gj(k);
        s.lambda = base.lambda + gl(k);
        out.tfims.push_back(s);
        out.channels.push_back(tfim_channel(s, dt, order, 0, mode));
    }
    return out;
}

} // namespace qpgeo

#pragma once

// Quantum Hamiltonian-based models: rho = sum_x p_theta(x) U_phi|x><x|U_phi^dag
// with a fully connected Boltzmann machine for p_theta and a layered
// hardware-efficient circuit for U_phi.

#include "qpgeo/operator_core.hpp"
#include "qpgeo/rng.hpp"
#include "qpgeo/states.hpp"

#include <numbers>
#include <utility>

namespace qpgeo {

inline constexpr double kShift = std::numbers::pi / 4.0;

/// Value of bit x_i (qubit i) in the basis index b.
inline int bit_of(std::uint32_t b, int i, int n) { return static_cast<int>((b >> (n - 1 - i)) & 1u); }

/// Spin s_i = 1 - 2 x_i.
inline double spin_of(std::uint32_t b, int i, int n) { return 1.0 - 2.0 * bit_of(b, i, n); }

// ---------------------------------------------------------------------------
// Boltzmann machine
// ---------------------------------------------------------------------------

/**
 * Fully connected Boltzmann machine on n bits,
 *   E(x) = -sum_i b_i s_i - sum_{i<j} w_ij s_i s_j,   s = 1 - 2x.
 * Flat parameter order: the n biases, then w_ij for i<j in lexicographic order.
 */
class BoltzmannMachine {
  public:
    BoltzmannMachine() = default;

    explicit BoltzmannMachine(int n_bits)
        : n_(n_bits), biases_(RealVector::Zero(n_bits)), weights_(RealMatrix::Zero(n_bits, n_bits)) {
        dim_of(n_bits);
    }

    BoltzmannMachine(RealVector biases, RealMatrix weights)
        : n_(static_cast<int>(biases.size())), biases_(std::move(biases)), weights_(std::move(weights)) {
        dim_of(n_);
        require(weights_.rows() == n_ && weights_.cols() == n_, "weight matrix has wrong shape");
        require((weights_ - weights_.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                "weights must be symmetric");
        require(weights_.diagonal().cwiseAbs().maxCoeff() <= 1e-12, "weights must have zero diagonal");
    }

    static int n_params(int n_bits) { return n_bits + n_bits * (n_bits - 1) / 2; }

    static BoltzmannMachine from_flat(int n_bits, const RealVector &theta) {
        require(theta.size() == n_params(n_bits), "theta has wrong length");
        RealVector b = theta.head(n_bits);
        RealMatrix w = RealMatrix::Zero(n_bits, n_bits);
        Eigen::Index k = n_bits;
        for (int i = 0; i < n_bits; ++i) {
            for (int j = i + 1; j < n_bits; ++j, ++k) {
                w(i, j) = w(j, i) = theta(k);
            }
        }
        return {std::move(b), std::move(w)};
    }

    [[nodiscard]] RealVector flat() const {
        RealVector theta(n_params(n_));
        theta.head(n_) = biases_;
        Eigen::Index k = n_;
        for (int i = 0; i < n_; ++i) {
            for (int j = i + 1; j < n_; ++j, ++k) {
                theta(k) = weights_(i, j);
            }
        }
        return theta;
    }

    [[nodiscard]] int n_bits() const { return n_; }
    [[nodiscard]] const RealVector &biases() const { return biases_; }
    [[nodiscard]] const RealMatrix &weights() const { return weights_; }

  private:
    int n_ = 0;
    RealVector biases_;
    RealMatrix weights_;
};

/// Energy of a bitstring given as a vector of 0/1 values.
inline double ebm_energy(const BoltzmannMachine &bm, std::span<const int> x) {
    const int n = bm.n_bits();
    require(static_cast<int>(x.size()) == n, "bitstring length does not match the model");
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
        require(x[i] == 0 || x[i] == 1, "bitstring entries must be 0 or 1");
        const double si = 1.0 - 2.0 * x[i];
        e -= bm.biases()(i) * si;
        for (int j = i + 1; j < n; ++j) {
            e -= bm.weights()(i, j) * si * (1.0 - 2.0 * x[j]);
        }
    }
    return e;
}

/// Rows are basis indices, columns are dE/dtheta_k. E is linear in theta, so
/// energies = G theta.
inline RealMatrix ebm_energy_gradients(int n_bits) {
    const std::size_t dim = dim_of(n_bits);
    RealMatrix g(static_cast<Eigen::Index>(dim), BoltzmannMachine::n_params(n_bits));
    for (std::uint32_t b = 0; b < dim; ++b) {
        Eigen::Index k = 0;
        for (int i = 0; i < n_bits; ++i, ++k) {
            g(b, k) = -spin_of(b, i, n_bits);
        }
        for (int i = 0; i < n_bits; ++i) {
            for (int j = i + 1; j < n_bits; ++j, ++k) {
                g(b, k) = -spin_of(b, i, n_bits) * spin_of(b, j, n_bits);
            }
        }
    }
    return g;
}

inline RealVector ebm_energies(const BoltzmannMachine &bm) {
    return ebm_energy_gradients(bm.n_bits()) * bm.flat();
}

/// Softmax of -E with max subtraction, and ln Z.
struct EbmDistribution {
    RealVector probabilities;
    double log_partition = 0.0;
};

inline EbmDistribution boltzmann_from_energies(const RealVector &energies) {
    const double emin = energies.minCoeff();
    RealVector w = (-(energies.array() - emin)).exp();
    const double z = w.sum();
    return {w / z, -emin + std::log(z)};
}

inline RealVector ebm_probabilities(const BoltzmannMachine &bm) {
    return boltzmann_from_energies(ebm_energies(bm)).probabilities;
}

inline double ebm_log_partition(const BoltzmannMachine &bm) {
    return boltzmann_from_energies(ebm_energies(bm)).log_partition;
}

/// Inverse-CDF draw of one outcome index from a categorical distribution.
inline std::uint32_t sample_categorical(const RealVector &p, Rng &rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        acc += p(k);
        if (u < acc) {
            return static_cast<std::uint32_t>(k);
        }
    }
    // Rounding leaves acc slightly below 1; fall back to the last non-zero entry.
    for (Eigen::Index k = p.size() - 1; k >= 0; --k) {
        if (p(k) > 0.0) {
            return static_cast<std::uint32_t>(k);
        }
    }
    return 0;
}

inline std::vector<std::uint32_t> ebm_sample(const BoltzmannMachine &bm, std::size_t count, Rng &rng) {
    const RealVector p = ebm_probabilities(bm);
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(sample_categorical(p, rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layered hardware-efficient circuit
// ---------------------------------------------------------------------------

/**
 * Per layer: e^{i phi X_k} on every qubit, then e^{i phi Z_k} on every qubit,
 * then e^{i phi Z_k Z_{k+1}} on each chain-adjacent pair. That is 3n - 1
 * angles per layer, 17 at n = 6. Gates are listed in application order.
 */
class QheaCircuit {
  public:
    QheaCircuit() = default;

    QheaCircuit(int n_qubits, int n_layers) : n_(n_qubits), layers_(n_layers) {
        dim_of(n_qubits);
        require(n_layers >= 1, "circuit needs at least one layer");
        for (int l = 0; l < n_layers; ++l) {
            for (int k = 0; k < n_; ++k) {
                gens_.push_back(PauliString::single(n_, k, 'X'));
            }
            for (int k = 0; k < n_; ++k) {
                gens_.push_back(PauliString::single(n_, k, 'Z'));
            }
            for (int k = 0; k + 1 < n_; ++k) {
                gens_.push_back(PauliString::pair(n_, k, k + 1, 'Z', 'Z'));
            }
        }
    }

    static int angles_per_layer(int n_qubits) { return 3 * n_qubits - 1; }

    [[nodiscard]] int n_qubits() const { return n_; }
    [[nodiscard]] int n_layers() const { return layers_; }
    [[nodiscard]] int n_angles() const { return static_cast<int>(gens_.size()); }
    [[nodiscard]] const std::vector<PauliString> &generators() const { return gens_; }

  private:
    int n_ = 0;
    int layers_ = 0;
    std::vector<PauliString> gens_;
};

inline void check_angles(const QheaCircuit &c, const RealVector &phi) {
    require(phi.size() == c.n_angles(), "angle count does not match the circuit");
}

inline ComplexMatrix qnn_unitary(const QheaCircuit &circuit, const RealVector &phi) {
    check_angles(circuit, phi);
    const auto dim = static_cast<Eigen::Index>(dim_of(circuit.n_qubits()));
    ComplexMatrix u = ComplexMatrix::Identity(dim, dim);
    const auto &gens = circuit.generators();
    for (std::size_t k = 0; k < gens.size(); ++k) {
        rotate_left(u, gens[k], phi(static_cast<Eigen::Index>(k)));
    }
    return u;
}

/// U diag(d) U^dag, applying gate conjugations one at a time.
inline ComplexMatrix push_forward_diagonal(const QheaCircuit &circuit, const RealVector &phi,
                                           const RealVector &diag) {
    check_angles(circuit, phi);
    ComplexMatrix m = diag.cast<cplx>().asDiagonal();
    const auto &gens = circuit.generators();
    for (std::size_t k = 0; k < gens.size(); ++k) {
        conjugate_rotation(m, gens[k], phi(static_cast<Eigen::Index>(k)));
    }
    return m;
}

/// U^dag O U.
inline ComplexMatrix pull_back(const QheaCircuit &circuit, const RealVector &phi, ComplexMatrix o) {
    check_angles(circuit, phi);
    const auto &gens = circuit.generators();
    for (std::size_t k = gens.size(); k-- > 0;) {
        conjugate_rotation(o, gens[k], -phi(static_cast<Eigen::Index>(k)));
    }
    return o;
}

/// tr(U_{phi +/- Delta^k} diag(d) U^dag_{phi +/- Delta^k} O) for every angle k.
struct ShiftedValues {
    RealVector plus;
    RealVector minus;

    [[nodiscard]] RealVector difference() const { return plus - minus; }
};

inline ShiftedValues shifted_expectations(const QheaCircuit &circuit, const RealVector &phi,
                                          const RealVector &diag, const ComplexMatrix &observable) {
    check_angles(circuit, phi);
    const auto &gens = circuit.generators();
    const std::size_t q = gens.size();
    // prefix[k]: diag pushed through gates 0..k-1.
    std::vector<ComplexMatrix> prefix;
    prefix.reserve(q);
    ComplexMatrix a = diag.cast<cplx>().asDiagonal();
    for (std::size_t k = 0; k < q; ++k) {
        prefix.push_back(a);
        conjugate_rotation(a, gens[k], phi(static_cast<Eigen::Index>(k)));
    }
    ShiftedValues out{RealVector(q), RealVector(q)};
    ComplexMatrix b = observable; // pulled back through gates q-1..k+1
    for (std::size_t k = q; k-- > 0;) {
        const auto ki = static_cast<Eigen::Index>(k);
        ComplexMatrix ap = prefix[k];
        conjugate_rotation(ap, gens[k], phi(ki) + kShift);
        ComplexMatrix am = std::move(prefix[k]);
        conjugate_rotation(am, gens[k], phi(ki) - kShift);
        out.plus(ki) = trace_product(ap, b).real();
        out.minus(ki) = trace_product(am, b).real();
        conjugate_rotation(b, gens[k], -phi(ki));
    }
    return out;
}

/// S_k = G_{q-1} ... G_{k+1}, the gates applied after gate k.
inline std::vector<ComplexMatrix> suffix_unitaries(const QheaCircuit &circuit, const RealVector &phi) {
    check_angles(circuit, phi);
    const auto &gens = circuit.generators();
    const std::size_t q = gens.size();
    const auto dim = static_cast<Eigen::Index>(dim_of(circuit.n_qubits()));
    std::vector<ComplexMatrix> out(q);
    ComplexMatrix s = ComplexMatrix::Identity(dim, dim);
    for (std::size_t k = q; k-- > 0;) {
        out[k] = s;
        // s <- s G_k  (right multiplication by e^{i phi P} = adjoint rotation with -phi)
        rotate_right_adjoint(s, gens[k], -phi(static_cast<Eigen::Index>(k)));
    }
    return out;
}

/// The full shifted push-forwards U_{phi +/- Delta^k} diag(d) U^dag_{phi +/- Delta^k}.
struct ShiftedMatrices {
    std::vector<ComplexMatrix> plus;
    std::vector<ComplexMatrix> minus;
};

inline ShiftedMatrices shifted_push_forwards(const QheaCircuit &circuit, const RealVector &phi,
                                             const RealVector &diag,
                                             const std::vector<ComplexMatrix> &suffix) {
    const auto &gens = circuit.generators();
    const std::size_t q = gens.size();
    ShiftedMatrices out;
    out.plus.reserve(q);
    out.minus.reserve(q);
    ComplexMatrix a = diag.cast<cplx>().asDiagonal();
    for (std::size_t k = 0; k < q; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        ComplexMatrix ap = a;
        conjugate_rotation(ap, gens[k], phi(ki) + kShift);
        ComplexMatrix am = a;
        conjugate_rotation(am, gens[k], phi(ki) - kShift);
        out.plus.push_back(suffix[k] * ap * suffix[k].adjoint());
        out.minus.push_back(suffix[k] * am * suffix[k].adjoint());
        conjugate_rotation(a, gens[k], phi(ki));
    }
    return out;
}

/// Heisenberg-dressed generators S_k P_k S_k^dag, so that dU/dphi_k = i P~_k U.
inline std::vector<ComplexMatrix> dressed_generators(const QheaCircuit &circuit, const RealVector &phi,
                                                     const std::vector<ComplexMatrix> &suffix) {
    const auto &gens = circuit.generators();
    std::vector<ComplexMatrix> out;
    out.reserve(gens.size());
    for (std::size_t k = 0; k < gens.size(); ++k) {
        out.push_back(suffix[k] * pauli_dense(PauliString(gens[k].letters())) * suffix[k].adjoint());
    }
    return out;
}

// ---------------------------------------------------------------------------
// The combined model
// ---------------------------------------------------------------------------

/// Architecture of a QHBM. Flat parameters are Omega = (theta, phi).
class QhbmModel {
  public:
    QhbmModel() = default;

    QhbmModel(int n_qubits, int n_layers)
        : n_(n_qubits), circuit_(n_qubits, n_layers), energy_grads_(ebm_energy_gradients(n_qubits)) {}

    [[nodiscard]] int n_qubits() const { return n_; }
    [[nodiscard]] int n_layers() const { return circuit_.n_layers(); }
    [[nodiscard]] int n_theta() const { return BoltzmannMachine::n_params(n_); }
    [[nodiscard]] int n_phi() const { return circuit_.n_angles(); }
    [[nodiscard]] int n_params() const { return n_theta() + n_phi(); }
    [[nodiscard]] const QheaCircuit &circuit() const { return circuit_; }
    /// Rows: basis states; columns: dE/dtheta.
    [[nodiscard]] const RealMatrix &energy_gradients() const { return energy_grads_; }

    [[nodiscard]] RealVector theta(const RealVector &omega) const {
        check(omega);
        return omega.head(n_theta());
    }
    [[nodiscard]] RealVector phi(const RealVector &omega) const {
        check(omega);
        return omega.tail(n_phi());
    }
    [[nodiscard]] RealVector join(const RealVector &theta, const RealVector &phi) const {
        require(theta.size() == n_theta() && phi.size() == n_phi(), "parameter block sizes do not match");
        RealVector omega(n_params());
        omega << theta, phi;
        return omega;
    }
    [[nodiscard]] BoltzmannMachine ebm(const RealVector &omega) const {
        return BoltzmannMachine::from_flat(n_, theta(omega));
    }
    void check(const RealVector &omega) const {
        require(omega.size() == n_params(), "parameter vector has wrong length (expected " +
                                                std::to_string(n_params()) + ", got " +
                                                std::to_string(omega.size()) + ")");
    }

    /// Seeded initialization theta, phi ~ Normal(0, scale^2).
    [[nodiscard]] RealVector random_params(Rng &rng, double scale = 0.1) const {
        RealVector omega(n_params());
        for (Eigen::Index k = 0; k < omega.size(); ++k) {
            omega(k) = scale * standard_normal(rng);
        }
        return omega;
    }

  private:
    int n_ = 0;
    QheaCircuit circuit_;
    RealMatrix energy_grads_;
};

/// Everything about rho_Omega that is cheap to keep around.
struct QhbmPoint {
    RealVector theta;
    RealVector phi;
    RealVector energies;
    RealVector probabilities;
    double log_partition = 0.0;
    ComplexMatrix unitary;

    [[nodiscard]] ComplexMatrix density() const {
        return unitary * probabilities.cast<cplx>().asDiagonal() * unitary.adjoint();
    }
    [[nodiscard]] ComplexMatrix modular_hamiltonian() const {
        return unitary * energies.cast<cplx>().asDiagonal() * unitary.adjoint();
    }
};

inline QhbmPoint evaluate(const QhbmModel &model, const RealVector &omega) {
    QhbmPoint pt;
    pt.theta = model.theta(omega);
    pt.phi = model.phi(omega);
    pt.energies = model.energy_gradients() * pt.theta;
    auto dist = boltzmann_from_energies(pt.energies);
    pt.probabilities = std::move(dist.probabilities);
    pt.log_partition = dist.log_partition;
    pt.unitary = qnn_unitary(model.circuit(), pt.phi);
    return pt;
}

inline DensityOperator qhbm_density(const QhbmModel &model, const RealVector &omega) {
    return DensityOperator::from_unnormalized(evaluate(model, omega).density(), model.n_qubits());
}

inline HermitianOperator qhbm_modular_hamiltonian(const QhbmModel &model, const RealVector &omega) {
    return HermitianOperator(evaluate(model, omega).modular_hamiltonian());
}

/// One eigenstate draw: x ~ p_theta and the vector U_phi|x>.
struct EigenstateSample {
    std::uint32_t index = 0;
    ComplexVector state;
};

inline EigenstateSample qhbm_sample_state(const QhbmModel &model, const RealVector &omega, Rng &rng) {
    const QhbmPoint pt = evaluate(model, omega);
    const std::uint32_t x = sample_categorical(pt.probabilities, rng);
    return {x, pt.unitary.col(x)};
}

} // namespace qpgeo

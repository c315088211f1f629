#pragma once

// Simulated projective measurements. Every estimator here is a sample mean of
// single-shot outcomes, so it is unbiased for the trace it targets.

#include "qpgeo/qhbm.hpp"

namespace qpgeo {

/// Exact evaluation (shots == 0) or sample means over `shots` single-shot
/// outcomes drawn from `rng`.
struct EvalMode {
    std::size_t shots = 0;
    Rng *rng = nullptr;

    static EvalMode exact() { return {}; }
    static EvalMode sampled(std::size_t shots, Rng &rng) {
        require(shots > 0, "sampled mode needs at least one shot");
        return {shots, &rng};
    }
    [[nodiscard]] bool is_exact() const { return shots == 0; }
    [[nodiscard]] Rng &generator() const {
        require(rng != nullptr, "sampled mode needs an RNG");
        return *rng;
    }
};

/// Outcome index drawn from |amps_y|^2 (amplitudes of a unit vector).
inline std::uint32_t sample_amplitudes(const cplx *amps, Eigen::Index dim, Rng &rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    Eigen::Index last = 0;
    for (Eigen::Index y = 0; y < dim; ++y) {
        const double w = std::norm(amps[y]);
        if (w > 0.0) {
            last = y;
        }
        acc += w;
        if (u < acc) {
            return static_cast<std::uint32_t>(y);
        }
    }
    return static_cast<std::uint32_t>(last);
}

/**
 * Sample estimate of tr(V diag(p) V^dag O) with O = W diag(o) W^dag.
 * Each shot draws x ~ p, prepares V|x>, measures in the eigenbasis of O and
 * records the eigenvalue o_y.
 */
inline double sampled_trace(const ComplexMatrix &v, const RealVector &p, const ComplexMatrix &w,
                            const RealVector &o, std::size_t shots, Rng &rng) {
    require(shots > 0, "sampled_trace needs at least one shot");
    const ComplexMatrix m = w.adjoint() * v; // column x holds the outcome amplitudes
    double acc = 0.0;
    for (std::size_t s = 0; s < shots; ++s) {
        const std::uint32_t x = sample_categorical(p, rng);
        const std::uint32_t y = sample_amplitudes(m.col(x).data(), m.rows(), rng);
        acc += o(y);
    }
    return acc / static_cast<double>(shots);
}

/// Per-shot outcome indices y for the same experiment, for estimators that
/// need a vector-valued record per shot.
inline std::vector<std::uint32_t> sampled_outcomes(const ComplexMatrix &v, const RealVector &p,
                                                   const ComplexMatrix &w, std::size_t shots,
                                                   Rng &rng) {
    const ComplexMatrix m = w.adjoint() * v;
    std::vector<std::uint32_t> out;
    out.reserve(shots);
    for (std::size_t s = 0; s < shots; ++s) {
        const std::uint32_t x = sample_categorical(p, rng);
        out.push_back(sample_amplitudes(m.col(x).data(), m.rows(), rng));
    }
    return out;
}

/// Number of shots per expectation when `total` is split evenly over `parts`.
inline std::size_t shots_per_part(std::size_t total, std::size_t parts) {
    return std::max<std::size_t>(1, total / std::max<std::size_t>(parts, 1));
}

/// The unitaries U_{phi +/- Delta^k}, k = 0..q-1.
struct ShiftedUnitaries {
    std::vector<ComplexMatrix> plus;
    std::vector<ComplexMatrix> minus;
};

inline ShiftedUnitaries shifted_unitaries(const QheaCircuit &circuit, const RealVector &phi) {
    const Eigen::Index q = circuit.n_angles();
    ShiftedUnitaries out;
    out.plus.reserve(static_cast<std::size_t>(q));
    out.minus.reserve(static_cast<std::size_t>(q));
    for (Eigen::Index k = 0; k < q; ++k) {
        RealVector shifted = phi;
        shifted(k) += kShift;
        out.plus.push_back(qnn_unitary(circuit, shifted));
        shifted(k) -= 2.0 * kShift;
        out.minus.push_back(qnn_unitary(circuit, shifted));
    }
    return out;
}

} // namespace qpgeo

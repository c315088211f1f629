#pragma once

// Dense complex linear algebra primitives shared by every other module:
// Pauli strings, Hermitian checks, spectral functions, pseudo-inverse and
// the Hilbert-Schmidt inner product. Everything is dense; dimensions are
// capped at 2^8.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qpgeo {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr int kMaxQubits = 8;
inline constexpr double kEigenFloor = 1e-12;
inline constexpr double kHermitianTol = 1e-10;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
    if (!cond) {
        throw Error(msg);
    }
}

inline std::size_t dim_of(int n_qubits) {
    require(n_qubits >= 1 && n_qubits <= kMaxQubits,
            "qubit count must be in [1, " + std::to_string(kMaxQubits) + "]");
    return std::size_t{1} << n_qubits;
}

// ---------------------------------------------------------------------------
// Pauli strings
// ---------------------------------------------------------------------------

/**
 * A tensor product of single-qubit Paulis with a real coefficient.
 *
 * Qubit 0 is the leftmost Kronecker factor, i.e. the most significant bit of
 * a computational-basis index. The bitmask form used by the fast kernels
 * stores, for basis index b, the X-type flips (X or Y) in `flip_mask` and the
 * Z-type signs (Z or Y) in `sign_mask`, so that
 *   P|b> = i^{#Y} (-1)^{popcount(b & sign_mask)} |b ^ flip_mask>.
 */
class PauliString {
  public:
    PauliString() = default;

    PauliString(std::string_view letters, double coefficient = 1.0)
        : letters_(letters), coefficient_(coefficient) {
        require(!letters_.empty(), "Pauli string needs at least one qubit");
        require(static_cast<int>(letters_.size()) <= kMaxQubits,
                "Pauli string exceeds qubit cap");
        const int n = n_qubits();
        for (int k = 0; k < n; ++k) {
            const std::uint32_t bit = 1u << (n - 1 - k);
            switch (letters_[k]) {
            case 'I':
                break;
            case 'X':
                flip_ |= bit;
                break;
            case 'Y':
                flip_ |= bit;
                sign_ |= bit;
                ++n_y_;
                break;
            case 'Z':
                sign_ |= bit;
                break;
            default:
                throw Error("invalid Pauli letter '" + std::string(1, letters_[k]) + "'");
            }
        }
    }

    /// Single non-identity letter on `qubit`, identity elsewhere.
    static PauliString single(int n_qubits, int qubit, char letter, double coefficient = 1.0) {
        std::string s(static_cast<std::size_t>(n_qubits), 'I');
        s.at(static_cast<std::size_t>(qubit)) = letter;
        return {s, coefficient};
    }

    static PauliString pair(int n_qubits, int q1, int q2, char l1, char l2,
                            double coefficient = 1.0) {
        std::string s(static_cast<std::size_t>(n_qubits), 'I');
        s.at(static_cast<std::size_t>(q1)) = l1;
        s.at(static_cast<std::size_t>(q2)) = l2;
        return {s, coefficient};
    }

    [[nodiscard]] int n_qubits() const { return static_cast<int>(letters_.size()); }
    [[nodiscard]] const std::string &letters() const { return letters_; }
    [[nodiscard]] double coefficient() const { return coefficient_; }
    [[nodiscard]] std::uint32_t flip_mask() const { return flip_; }
    [[nodiscard]] std::uint32_t sign_mask() const { return sign_; }
    [[nodiscard]] bool is_identity() const { return flip_ == 0 && sign_ == 0; }

    /// Phase picked up by basis state |b> (coefficient excluded).
    [[nodiscard]] cplx phase(std::uint32_t b) const {
        static constexpr cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        cplx ph = ipow[n_y_ % 4];
        if (std::popcount(b & sign_) % 2 == 1) {
            ph = -ph;
        }
        return ph;
    }

  private:
    std::string letters_;
    double coefficient_ = 1.0;
    std::uint32_t flip_ = 0;
    std::uint32_t sign_ = 0;
    int n_y_ = 0;
};

/// Kronecker realization c * P_0 (x) P_1 (x) ... of a Pauli string.
inline ComplexMatrix pauli_dense(const PauliString &p) {
    const std::size_t dim = dim_of(p.n_qubits());
    ComplexMatrix out = ComplexMatrix::Zero(static_cast<Eigen::Index>(dim),
                                            static_cast<Eigen::Index>(dim));
    for (std::uint32_t b = 0; b < dim; ++b) {
        out(b ^ p.flip_mask(), b) = p.coefficient() * p.phase(b);
    }
    return out;
}

/// Dense sum of Pauli strings.
inline ComplexMatrix pauli_sum_dense(const std::vector<PauliString> &terms) {
    require(!terms.empty(), "empty Pauli sum");
    ComplexMatrix out = pauli_dense(terms.front());
    for (std::size_t t = 1; t < terms.size(); ++t) {
        require(terms[t].n_qubits() == terms.front().n_qubits(), "mixed qubit counts in Pauli sum");
        out += pauli_dense(terms[t]);
    }
    return out;
}

/// In-place M <- e^{i a P} M, with P the bare Pauli (coefficient ignored).
inline void rotate_left(ComplexMatrix &m, const PauliString &p, double angle) {
    const double c = std::cos(angle);
    const cplx is{0.0, std::sin(angle)};
    const auto rows = static_cast<std::uint32_t>(m.rows());
    const auto cols = m.cols();
    const std::uint32_t f = p.flip_mask();
    if (f == 0) {
        for (std::uint32_t r = 0; r < rows; ++r) {
            m.row(r) *= c + is * p.phase(r);
        }
        return;
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
        const std::uint32_t s = r ^ f;
        if (s < r) {
            continue;
        }
        // (P M)_r = phase(s) M_s and (P M)_s = phase(r) M_r.
        const cplx kr = is * p.phase(s);
        const cplx ks = is * p.phase(r);
        for (Eigen::Index j = 0; j < cols; ++j) {
            const cplx a = m(r, j);
            const cplx b = m(s, j);
            m(r, j) = c * a + kr * b;
            m(s, j) = c * b + ks * a;
        }
    }
}

/// In-place M <- M e^{-i a P}.
inline void rotate_right_adjoint(ComplexMatrix &m, const PauliString &p, double angle) {
    const double c = std::cos(angle);
    const cplx mis{0.0, -std::sin(angle)};
    const auto cols = static_cast<std::uint32_t>(m.cols());
    const auto rows = m.rows();
    const std::uint32_t f = p.flip_mask();
    if (f == 0) {
        for (std::uint32_t col = 0; col < cols; ++col) {
            m.col(col) *= c + mis * p.phase(col);
        }
        return;
    }
    for (std::uint32_t col = 0; col < cols; ++col) {
        const std::uint32_t s = col ^ f;
        if (s < col) {
            continue;
        }
        // (M P)_{:,col} = M_{:,s} phase(col); (M P)_{:,s} = M_{:,col} phase(s).
        const cplx kc = mis * p.phase(col);
        const cplx ks = mis * p.phase(s);
        cplx *pc = m.col(col).data();
        cplx *ps = m.col(s).data();
        for (Eigen::Index i = 0; i < rows; ++i) {
            const cplx a = pc[i];
            const cplx b = ps[i];
            pc[i] = c * a + kc * b;
            ps[i] = c * b + ks * a;
        }
    }
}

/// In-place M <- e^{i a P} M e^{-i a P}.
inline void conjugate_rotation(ComplexMatrix &m, const PauliString &p, double angle) {
    rotate_left(m, p, angle);
    rotate_right_adjoint(m, p, angle);
}

// ---------------------------------------------------------------------------
// Hermitian operators and spectral functions
// ---------------------------------------------------------------------------

inline double max_abs(const ComplexMatrix &a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const ComplexMatrix &a, double rel_tol = kHermitianTol) {
    if (a.rows() != a.cols()) {
        return false;
    }
    const double scale = max_abs(a);
    return max_abs(a - a.adjoint()) <= rel_tol * std::max(scale, 1e-300);
}

/// Square complex matrix that passed the Hermiticity check on construction.
class HermitianOperator {
  public:
    HermitianOperator() = default;

    explicit HermitianOperator(ComplexMatrix m) : m_(std::move(m)) {
        require(m_.rows() > 0 && m_.rows() == m_.cols(), "operator must be square and non-empty");
        require(m_.allFinite(), "operator has non-finite entries");
        require(is_hermitian(m_), "not Hermitian");
        // Symmetrize away rounding noise so downstream spectra are exact-real.
        m_ = 0.5 * (m_ + m_.adjoint()).eval();
    }

    [[nodiscard]] const ComplexMatrix &matrix() const { return m_; }
    [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }

  private:
    ComplexMatrix m_;
};

struct Spectrum {
    RealVector values;     // ascending
    ComplexMatrix vectors; // columns are eigenvectors

    [[nodiscard]] ComplexMatrix reconstruct() const {
        return vectors * values.cast<cplx>().asDiagonal() * vectors.adjoint();
    }

    /// V f(diag) V^dagger for a real scalar function f.
    template <class F>
    [[nodiscard]] ComplexMatrix apply(F &&f) const {
        RealVector fv = values.unaryExpr(std::forward<F>(f));
        return vectors * fv.cast<cplx>().asDiagonal() * vectors.adjoint();
    }
};

inline Spectrum eigh(const ComplexMatrix &a) {
    require(a.rows() == a.cols() && a.rows() > 0, "eigh needs a square matrix");
    require(is_hermitian(a), "not Hermitian");
    const ComplexMatrix sym = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym);
    require(solver.info() == Eigen::Success, "eigendecomposition failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

inline Spectrum eigh(const HermitianOperator &a) { return eigh(a.matrix()); }

/// e^{A} for Hermitian A.
inline ComplexMatrix matrix_exp(const HermitianOperator &a) {
    return eigh(a).apply([](double x) { return std::exp(x); });
}

/// e^{-i t A} for Hermitian A; the unitary generated by A.
inline ComplexMatrix unitary_exp(const HermitianOperator &a, double t) {
    const Spectrum s = eigh(a);
    ComplexVector ph(s.values.size());
    for (Eigen::Index k = 0; k < s.values.size(); ++k) {
        ph(k) = std::exp(cplx{0.0, -t * s.values(k)});
    }
    return s.vectors * ph.asDiagonal() * s.vectors.adjoint();
}

/// log A for positive-definite Hermitian A; errors below the eigen floor.
inline HermitianOperator matrix_log(const HermitianOperator &a, double eigen_floor = kEigenFloor) {
    const Spectrum s = eigh(a);
    require(s.values.minCoeff() > eigen_floor, "singular state");
    return HermitianOperator(s.apply([](double x) { return std::log(x); }));
}

inline cplx hs_inner(const ComplexMatrix &a, const ComplexMatrix &b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "dimension mismatch in hs_inner");
    return (a.adjoint() * b).trace();
}

/// tr(A B) without forming the product.
inline cplx trace_product(const ComplexMatrix &a, const ComplexMatrix &b) {
    return (a.transpose().cwiseProduct(b)).sum();
}

// ---------------------------------------------------------------------------
// Pseudo-inverse policies for real symmetric PSD matrices
// ---------------------------------------------------------------------------

struct PinvPolicy {
    enum class Kind { pseudo_inverse, tikhonov };
    Kind kind = Kind::pseudo_inverse;
    double rel_tol = 1e-8;
    double tikhonov_eps = 0.0;
};

inline RealMatrix pseudo_inverse(const RealMatrix &a, double rel_tol = 1e-8) {
    require(a.rows() == a.cols(), "pseudo_inverse needs a square matrix");
    if (a.size() == 0) {
        return a;
    }
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            "pseudo_inverse needs a symmetric matrix");
    const RealMatrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(sym);
    const RealVector &sv = solver.eigenvalues();
    const double smax = sv.cwiseAbs().maxCoeff();
    RealVector inv = RealVector::Zero(sv.size());
    if (smax > 0.0) {
        for (Eigen::Index k = 0; k < sv.size(); ++k) {
            if (sv(k) >= rel_tol * smax) {
                inv(k) = 1.0 / sv(k);
            }
        }
    }
    const RealMatrix &v = solver.eigenvectors();
    return v * inv.asDiagonal() * v.transpose();
}

/// (A + eps I)^{-1}.
inline RealMatrix tikhonov_inverse(const RealMatrix &a, double eps) {
    require(eps > 0.0, "Tikhonov regularization needs eps > 0");
    const RealMatrix reg = 0.5 * (a + a.transpose()) +
                           eps * RealMatrix::Identity(a.rows(), a.cols());
    return reg.ldlt().solve(RealMatrix::Identity(a.rows(), a.cols()));
}

inline RealMatrix regularized_inverse(const RealMatrix &a, const PinvPolicy &policy) {
    if (policy.kind == PinvPolicy::Kind::tikhonov) {
        return tikhonov_inverse(a, policy.tikhonov_eps);
    }
    return pseudo_inverse(a, policy.rel_tol);
}

inline double min_eigenvalue(const RealMatrix &a) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const RealMatrix &a) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().maxCoeff();
}

} // namespace qpgeo

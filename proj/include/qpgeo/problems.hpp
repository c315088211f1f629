#pragma once

// QHBM optimization problems (VQT and QMHL) wired into the optimizer
// callbacks, with optional history anchors for chained sequences.

#include "qpgeo/exp_family.hpp"
#include "qpgeo/losses.hpp"
#include "qpgeo/metrics.hpp"
#include "qpgeo/optimizers.hpp"

#include <memory>
#include <optional>

namespace qpgeo {

/// Weighted reverse-divergence terms sum_i w_i D(rho_{anchor_i} || rho_Omega), evaluated exactly.
struct HistoryTerms {
    std::vector<QhbmPoint> anchors;
    std::vector<double> weights;

    [[nodiscard]] bool empty() const { return anchors.empty(); }
};

namespace detail {

inline Objective to_objective(const LossEvaluation &l) { return {l.value, l.gradient(), l.shots_used}; }

/// Callbacks shared by every QHBM problem: metric, divergences and fidelity.
inline Problem qhbm_problem_skeleton(const QhbmModel &model, std::optional<DensityOperator> target,
                                     std::shared_ptr<const HistoryTerms> history) {
    Problem p;
    p.dim = model.n_params();
    p.n_quantum_params = static_cast<std::size_t>(model.n_phi());
    p.metric = [model](const RealVector &w, MetricKind kind, const EvalMode &mode) {
        return info_matrix_qhbm(model, w, kind, mode);
    };
    p.forward_divergence = [model](const RealVector &anchor_omega) -> GradientFn {
        auto anchor = std::make_shared<const Anchor>(model, anchor_omega);
        return [model, anchor](const RealVector &w, const EvalMode &mode) {
            return to_objective(relative_entropy_to_anchor_grad(model, evaluate(model, w), *anchor, mode));
        };
    };
    if (history && !history->empty()) {
        p.inner_regularizer = [model, history](const RealVector &w, const EvalMode &) {
            const QhbmPoint pt = evaluate(model, w);
            Objective o{0.0, RealVector::Zero(model.n_params()), 0};
            for (std::size_t i = 0; i < history->anchors.size(); ++i) {
                const LossEvaluation h = relative_entropy_from_anchor_grad(model, pt, history->anchors[i]);
                o.value += history->weights[i] * h.value;
                o.gradient += history->weights[i] * h.gradient();
            }
            return o;
        };
    }
    p.reverse_divergence = [model](const RealVector &anchor_omega) -> GradientFn {
        auto data = std::make_shared<const DataState>(qhbm_density(model, anchor_omega));
        auto entropy = std::make_shared<const double>(von_neumann_entropy(data->rho));
        return [model, data, entropy](const RealVector &w, const EvalMode &mode) {
            Objective o = to_objective(qmhl_loss(model, evaluate(model, w), *data, mode));
            o.value -= *entropy;
            return o;
        };
    };
    if (target) {
        auto t = std::make_shared<const DensityOperator>(std::move(*target));
        p.fidelity = [model, t](const RealVector &w) { return fidelity(qhbm_density(model, w), *t); };
    }
    return p;
}

} // namespace detail

/// VQT: minimize -S(rho_Omega) + beta tr(rho_Omega H); fidelity against `target` when given.
inline Problem make_vqt_problem(const QhbmModel &model, const HermitianOperator &h, double beta,
                                std::optional<DensityOperator> target = std::nullopt,
                                std::shared_ptr<const HistoryTerms> history = nullptr) {
    require(beta >= 0.0, "inverse temperature must be non-negative");
    require(h.dim() == static_cast<Eigen::Index>(dim_of(model.n_qubits())),
            "Hamiltonian dimension does not match the model");
    Problem p = detail::qhbm_problem_skeleton(model, std::move(target), std::move(history));
    auto obs = std::make_shared<const Observable>(h);
    p.loss = [model, obs, beta](const RealVector &w, const EvalMode &mode) {
        return detail::to_objective(vqt_loss(model, evaluate(model, w), *obs, beta, mode));
    };
    p.exact_loss = [model, obs, beta](const RealVector &w) {
        return vqt_loss(model, evaluate(model, w), *obs, beta).value;
    };
    return p;
}

/// QMHL: minimize tr(sigma K_Omega) + ln Z_theta; fidelity against `target`,
/// which defaults to the data state itself.
inline Problem make_qmhl_problem(const QhbmModel &model, const DensityOperator &data,
                                 std::optional<DensityOperator> target = std::nullopt,
                                 std::shared_ptr<const HistoryTerms> history = nullptr) {
    require(data.dim() == static_cast<Eigen::Index>(dim_of(model.n_qubits())),
            "data state dimension does not match the model");
    Problem p = detail::qhbm_problem_skeleton(model, target ? std::move(target) : std::optional(data),
                                              std::move(history));
    auto ds = std::make_shared<const DataState>(data);
    p.loss = [model, ds](const RealVector &w, const EvalMode &mode) {
        return detail::to_objective(qmhl_loss(model, evaluate(model, w), *ds, mode));
    };
    p.exact_loss = [model, ds](const RealVector &w) { return qmhl_loss(model, evaluate(model, w), *ds).value; };
    return p;
}

/**
 * Learning D(sigma || rho_mu) over an exponential family in exponential
 * coordinates. Exact mode uses the exact gradient; sampled mode averages
 * single-eigenstate estimates over `shots` data samples.
 */
inline Problem make_ef_learning_problem(const std::vector<PauliString> &basis, const DensityOperator &data) {
    auto proto = std::make_shared<const ExpFamilyModel>(basis, RealVector::Zero(static_cast<Eigen::Index>(basis.size())));
    auto ds = std::make_shared<const DataState>(data);
    Problem p;
    p.dim = proto->size();
    p.n_quantum_params = static_cast<std::size_t>(proto->size());
    p.loss = [proto, ds](const RealVector &mu, const EvalMode &mode) {
        const ExpFamilyModel m = proto->with_mu(mu);
        Objective o;
        o.value = relative_entropy(ds->rho, ef_density(m));
        if (mode.is_exact()) {
            o.gradient = ef_learning_gradient(m, ds->rho);
            return o;
        }
        o.gradient = RealVector::Zero(m.size());
        for (std::size_t s = 0; s < mode.shots; ++s) {
            o.gradient += ef_learning_gradient_online(m, ds->sample(mode.generator()));
        }
        o.gradient /= static_cast<double>(mode.shots);
        o.shots = mode.shots;
        return o;
    };
    p.exact_loss = [proto, ds](const RealVector &mu) { return relative_entropy(ds->rho, ef_density(proto->with_mu(mu))); };
    p.metric = [proto](const RealVector &mu, MetricKind kind, const EvalMode &) {
        const ExpFamilyModel m = proto->with_mu(mu);
        InformationMatrix im = info_matrix_oracle(ef_tangents(m), ef_density(m), kind);
        im.params_snapshot = mu;
        return im;
    };
    p.forward_divergence = [proto](const RealVector &anchor) -> GradientFn {
        auto k = std::make_shared<const HermitianOperator>(proto->with_mu(anchor).generator());
        return [proto, k](const RealVector &mu, const EvalMode &) {
            const ExpFamilyModel m = proto->with_mu(mu);
            return Objective{0.0, ef_simulation_gradient(m, *k, 1.0), 0};
        };
    };
    p.reverse_divergence = [proto](const RealVector &anchor) -> GradientFn {
        auto a = std::make_shared<const DensityOperator>(ef_density(proto->with_mu(anchor)));
        return [proto, a](const RealVector &mu, const EvalMode &) {
            return Objective{0.0, ef_learning_gradient(proto->with_mu(mu), *a), 0};
        };
    };
    p.fidelity = [proto, ds](const RealVector &mu) { return fidelity(ef_density(proto->with_mu(mu)), ds->rho); };
    return p;
}

} // namespace qpgeo

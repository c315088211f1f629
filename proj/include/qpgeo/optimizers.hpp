#pragma once

// Descent engines over a flat parameter vector: SGD, Adam, natural-gradient
// (QPNGD), mirror descent (QPMD) and Lagrange descent. The engines see a
// problem only through gradient, metric and divergence callbacks.

#include "qpgeo/estimators.hpp"
#include "qpgeo/metrics.hpp"

#include <chrono>
#include <functional>
#include <limits>


namespace qpgeo {

enum class OptimizerKind { sgd, adam, qpngd, qpmd, lagrange };
enum class Schedule { constant, one_over_j };

inline const char *to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::sgd:
        return "sgd";
    case OptimizerKind::adam:
        return "adam";
    case OptimizerKind::qpngd:
        return "qpngd";
    case OptimizerKind::qpmd:
        return "qpmd";
    case OptimizerKind::lagrange:
        return "lagrange";
    }
    return "?";
}

inline OptimizerKind optimizer_kind_from_string(const std::string &s) {
    for (const auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::qpngd, OptimizerKind::qpmd,
                         OptimizerKind::lagrange}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw Error("unknown optimizer '" + s + "'");
}

inline const char *to_string(Schedule s) { return s == Schedule::constant ? "constant" : "one_over_j"; }

inline Schedule schedule_from_string(const std::string &s) {
    if (s == "constant") {
        return Schedule::constant;
    }
    if (s == "one_over_j") {
        return Schedule::one_over_j;
    }
    throw Error("unknown schedule '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::qpmd;
    double learning_rate = 0.1; // sgd, adam
    double lambda = 10.0;       // qpngd, qpmd, lagrange: step is 1/lambda_j
    Schedule schedule = Schedule::constant;
    int schedule_offset = 0; // one_over_j divides by j + offset
    int inner_steps = 20;
    double inner_lr = 0.004;    // inner descent is stable for inner_lr * lambda * max eig(metric) < 2
    double inner_exit_tol = 1e-9;
    PinvPolicy pinv;
    MetricKind metric = MetricKind::bkm;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-7;
    std::size_t shots = 0;
    int max_steps = 500;
    std::uint64_t seed = 0;

    void validate() const {
        require(learning_rate > 0.0, "learning_rate must be positive");
        require(lambda > 0.0, "lambda must be positive");
        require(inner_steps >= 1, "inner_steps must be at least 1");
        require(inner_lr > 0.0, "inner_lr must be positive");
        require(inner_exit_tol >= 0.0, "inner_exit_tol must be non-negative");
        require(pinv.rel_tol >= 0.0, "pinv_rel_tol must be non-negative");
        require(pinv.kind != PinvPolicy::Kind::tikhonov || pinv.tikhonov_eps > 0.0,
                "tikhonov_eps must be positive for the Tikhonov policy");
        require(schedule_offset >= 0, "schedule_offset must be non-negative");
        require(max_steps >= 0, "max_steps must be non-negative");
        require(schedule == Schedule::constant || kind == OptimizerKind::qpngd,
                "one_over_j schedule is only meaningful with qpngd");
        require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0,
                "invalid Adam hyperparameters");
    }
};

/// Nominal number of parameter-shifted circuit evaluations per outer step.
inline std::size_t shifts_per_step(const OptimizerConfig &cfg, std::size_t q) {
    const auto k = static_cast<std::size_t>(cfg.inner_steps);
    switch (cfg.kind) {
    case OptimizerKind::sgd:
    case OptimizerKind::adam:
        return 2 * q;
    case OptimizerKind::qpngd:
        return 2 * q * (q + 1) + 2 * q;
    case OptimizerKind::qpmd:
        return 2 * k * q;
    case OptimizerKind::lagrange:
        return 4 * k * q;
    }
    return 0;
}

/// Step multiplier 1/lambda_j (metric-aware) or lr_j (first-order) at outer step j >= 1.
/// The one_over_j schedule uses base / (j + schedule_offset).
inline double step_scale(const OptimizerConfig &cfg, int j) {
    const double base = cfg.kind == OptimizerKind::sgd || cfg.kind == OptimizerKind::adam ? cfg.learning_rate
                                                                                           : 1.0 / cfg.lambda;
    return cfg.schedule == Schedule::one_over_j ? base / static_cast<double>(j + cfg.schedule_offset) : base;
}

// ---------------------------------------------------------------------------
// Problem interface
// ---------------------------------------------------------------------------

struct Objective {
    double value = 0.0;
    RealVector gradient;
    std::size_t shots = 0;
};

using GradientFn = std::function<Objective(const RealVector &, const EvalMode &)>;

/**
 * Callbacks of an optimization problem. `forward_divergence(anchor)` returns
 * the gradient of D(rho_Omega || rho_anchor) as a function of Omega;
 * `reverse_divergence(anchor)` that of D(rho_anchor || rho_Omega).
 */
struct Problem {
    Eigen::Index dim = 0;
    std::size_t n_quantum_params = 0;
    GradientFn loss;
    std::function<InformationMatrix(const RealVector &, MetricKind, const EvalMode &)> metric;
    std::function<GradientFn(const RealVector &)> forward_divergence;
    std::function<GradientFn(const RealVector &)> reverse_divergence;
    /// Optional extra term added unscaled to every QPMD inner gradient (history anchors).
    GradientFn inner_regularizer;
    std::function<double(const RealVector &)> exact_loss;
    std::function<double(const RealVector &)> fidelity;
};

// ---------------------------------------------------------------------------
// Single steps
// ---------------------------------------------------------------------------

inline RealVector sgd_step(const RealVector &params, const RealVector &grad, double lr) {
    return params - lr * grad;
}

struct AdamState {
    RealVector m;
    RealVector v;
    int t = 0;
};

inline RealVector adam_step(const RealVector &params, const RealVector &grad, AdamState &state, double lr,
                            double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7) {
    if (state.t == 0) {
        state.m = RealVector::Zero(params.size());
        state.v = RealVector::Zero(params.size());
    }
    ++state.t;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseAbs2();
    const RealVector m_hat = state.m / (1.0 - std::pow(beta1, state.t));
    const RealVector v_hat = state.v / (1.0 - std::pow(beta2, state.t));
    return params - lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
}

/// Omega - (1/lambda_j) I^+ grad.
inline RealVector qpngd_step(const RealVector &params, const RealVector &grad, const RealMatrix &metric,
                             double lambda_j, const PinvPolicy &policy) {
    require(metric.rows() == params.size() && metric.cols() == params.size(), "metric has wrong dimension");
    return params - (regularized_inverse(metric, policy) * grad) / lambda_j;
}

struct InnerResult {
    RealVector params;
    int steps_taken = 0;
    std::size_t shots = 0;
    bool finite = true;
};

/**
 * K inner steps Omega^{k+1} = Omega^k - eta (g_anchor + lambda grad D(rho_Omega^k || rho_anchor)),
 * starting at the anchor with the loss gradient frozen there. Stops early when
 * the update norm drops below `exit_tol`.
 */
inline InnerResult qpmd_step(const RealVector &anchor, const RealVector &loss_grad, const GradientFn &div_grad,
                             double lambda_j, int inner_steps, double inner_lr, double exit_tol,
                             const EvalMode &mode = EvalMode::exact(), const GradientFn &extra = {}) {
    InnerResult r{anchor};
    for (int k = 0; k < inner_steps; ++k) {
        const Objective d = div_grad(r.params, mode);
        r.shots += d.shots;
        RealVector update = inner_lr * (loss_grad + lambda_j * d.gradient);
        if (extra) {
            update += inner_lr * extra(r.params, mode).gradient;
        }
        if (!update.allFinite()) {
            r.finite = false;
            return r;
        }
        r.params -= update;
        r.steps_taken = k + 1;
        if (update.norm() < exit_tol) {
            break;
        }
    }
    return r;
}

/**
 * Lagrange descent: inner steps on delta with the loss gradient re-evaluated at
 * Omega + delta and the reverse divergence D(rho_Omega || rho_{Omega+delta}).
 */
inline InnerResult lagrange_step(const RealVector &anchor, const GradientFn &loss_grad, const GradientFn &rev_div_grad,
                                 double lambda_j, int inner_steps, double inner_lr, double exit_tol,
                                 const EvalMode &mode = EvalMode::exact()) {
    RealVector delta = RealVector::Zero(anchor.size());
    InnerResult r{anchor};
    for (int k = 0; k < inner_steps; ++k) {
        const RealVector at = anchor + delta;
        const Objective l = loss_grad(at, mode);
        const Objective d = rev_div_grad(at, mode);
        r.shots += l.shots + d.shots;
        const RealVector update = inner_lr * (l.gradient + lambda_j * d.gradient);
        if (!update.allFinite()) {
            r.finite = false;
            r.params = anchor + delta;
            return r;
        }
        delta -= update;
        r.steps_taken = k + 1;
        if (update.norm() < exit_tol) {
            break;
        }
    }
    r.params = anchor + delta;
    return r;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct StepRecord {
    int step = 0;
    RealVector params;
    double loss = 0.0;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
    double grad_norm = 0.0;
    double info_condition = std::numeric_limits<double>::quiet_NaN();
    std::size_t shots_cumulative = 0;
    std::size_t shifts_cumulative = 0;
    double wall_ms = 0.0;
};

struct Trajectory {
    std::vector<StepRecord> records;
    bool aborted = false;
    std::string abort_reason;
    std::size_t shifts_per_step = 0;

    [[nodiscard]] const StepRecord &last() const {
        require(!records.empty(), "empty trajectory");
        return records.back();
    }
    [[nodiscard]] const RealVector &final_params() const { return last().params; }
};

struct RunOptions {
    bool timing = false;
    /// Store parameters every step (always stored for the first and last record).
    bool keep_all_params = true;
};

inline bool all_finite(const Objective &o) { return std::isfinite(o.value) && o.gradient.allFinite(); }

/**
 * Outer loop. Record 0 is the initial point; record j follows update j. In
 * shot mode the update uses sampled gradients while the logged loss is exact.
 * A non-finite loss or gradient ends the run with `aborted` set and the
 * trajectory so far preserved.
 */
inline Trajectory run_optimization(const OptimizerConfig &cfg, const Problem &problem, const RealVector &initial,
                                   const RunOptions &opts = {}) {
    cfg.validate();
    require(initial.size() == problem.dim, "initial parameters have wrong dimension");
    Rng rng = make_stream(cfg.seed, "measurement");
    const EvalMode mode = cfg.shots == 0 ? EvalMode::exact() : EvalMode::sampled(cfg.shots, rng);
    const EvalMode exact = EvalMode::exact();

    Trajectory traj;
    traj.shifts_per_step = shifts_per_step(cfg, problem.n_quantum_params);
    AdamState adam;
    std::size_t shots = 0;
    std::size_t shifts = 0;
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    RealVector params = initial;
    Objective current = problem.loss(params, mode);
    shots += current.shots;

    const auto record = [&](int step, const Objective &obj) {
        StepRecord r;
        r.step = step;
        if (opts.keep_all_params || step == 0 || step == cfg.max_steps) {
            r.params = params;
        }
        r.loss = mode.is_exact() || !problem.exact_loss ? obj.value : problem.exact_loss(params);
        if (problem.fidelity) {
            r.fidelity = problem.fidelity(params);
        }
        r.grad_norm = obj.gradient.norm();
        r.shots_cumulative = shots;
        r.shifts_cumulative = shifts;
        if (opts.timing) {
            r.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        }
        traj.records.push_back(std::move(r));
    };
    const auto abort = [&](const std::string &why) {
        traj.aborted = true;
        traj.abort_reason = why;
        if (!traj.records.empty() && traj.records.back().params.size() == 0) {
            traj.records.back().params = params;
        }
    };

    if (!all_finite(current)) {
        record(0, current);
        abort("non-finite loss or gradient at step 0");
        return traj;
    }
    record(0, current);

    for (int j = 1; j <= cfg.max_steps; ++j) {
        const double scale = step_scale(cfg, j);
        RealVector next;
        switch (cfg.kind) {
        case OptimizerKind::sgd:
            next = sgd_step(params, current.gradient, scale);
            break;
        case OptimizerKind::adam:
            next = adam_step(params, current.gradient, adam, scale, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            break;
        case OptimizerKind::qpngd: {
            const InformationMatrix im = problem.metric(params, cfg.metric, mode);
            if (cfg.shots > 0) {
                shots += cfg.shots * (problem.n_quantum_params * (problem.n_quantum_params + 1) * 2);
            }
            if (!im.entries.allFinite()) {
                abort("non-finite information matrix at step " + std::to_string(j));
                return traj;
            }
            next = qpngd_step(params, current.gradient, im.entries, 1.0 / scale, cfg.pinv);
            traj.records.back().info_condition = im.condition_number();
            break;
        }
        case OptimizerKind::qpmd: {
            const InnerResult r = qpmd_step(params, current.gradient, problem.forward_divergence(params), 1.0 / scale,
                                            cfg.inner_steps, cfg.inner_lr, cfg.inner_exit_tol, mode,
                                            problem.inner_regularizer);
            shots += r.shots;
            if (!r.finite) {
                abort("non-finite inner update at step " + std::to_string(j));
                return traj;
            }
            next = r.params;
            break;
        }
        case OptimizerKind::lagrange: {
            const InnerResult r = lagrange_step(params, problem.loss, problem.reverse_divergence(params), 1.0 / scale,
                                                cfg.inner_steps, cfg.inner_lr, cfg.inner_exit_tol, mode);
            shots += r.shots;
            if (!r.finite) {
                abort("non-finite inner update at step " + std::to_string(j));
                return traj;
            }
            next = r.params;
            break;
        }
        }
        if (!next.allFinite()) {
            abort("non-finite parameters at step " + std::to_string(j));
            return traj;
        }
        params = std::move(next);
        shifts += traj.shifts_per_step;
        current = problem.loss(params, mode);
        shots += current.shots;
        record(j, current);
        if (!all_finite(current)) {
            abort("non-finite loss or gradient at step " + std::to_string(j));
            return traj;
        }
    }
    (void)exact;
    return traj;
}

} // namespace qpgeo

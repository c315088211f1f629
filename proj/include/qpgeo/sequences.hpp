#pragma once

// Sequences of related targets: chained versus independent initialization over
// a beta sweep, recursive channel propagation of a learned state, metric
// variation between consecutive optima, and history-weighted chaining.

#include "qpgeo/problems.hpp"
#include "qpgeo/targets.hpp"

namespace qpgeo {

enum class InitPolicy { independent, chained };

inline const char *to_string(InitPolicy p) { return p == InitPolicy::chained ? "chained" : "independent"; }

inline InitPolicy init_policy_from_string(const std::string &s) {
    if (s == "chained") {
        return InitPolicy::chained;
    }
    if (s == "independent") {
        return InitPolicy::independent;
    }
    throw Error("unknown init_policy '" + s + "'");
}

struct SequenceSettings {
    int steps_first = 500;
    int steps_rest = 100;
    InitPolicy init_policy = InitPolicy::chained;
    /// History decay zeta in [0, 1); 0 disables history terms.
    double zeta = 0.0;
    /// Scale of the fresh random initializations.
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(steps_first >= 1 && steps_rest >= 1, "sequence step counts must be at least 1");
        require(zeta >= 0.0 && zeta < 1.0, "zeta must be in [0, 1)");
        require(init_scale >= 0.0, "init_scale must be non-negative");
    }
};

struct SequenceResult {
    std::vector<Trajectory> runs;
    std::vector<RealVector> optima;
    std::vector<double> final_fidelity;
    /// ||I(Omega*_{k+1}) - I(Omega*_k)||_F for consecutive optima.
    std::vector<double> metric_variation;
    bool aborted = false;

    [[nodiscard]] double mean_final_fidelity() const {
        double s = 0.0;
        for (const double f : final_fidelity) {
            s += f;
        }
        return final_fidelity.empty() ? 0.0 : s / static_cast<double>(final_fidelity.size());
    }
};

/// Frobenius norm of the difference of exact BKM matrices at two parameter sets.
inline double metric_variation(const QhbmModel &model, const RealVector &a, const RealVector &b) {
    return (bkm_info_qhbm(model, a).entries - bkm_info_qhbm(model, b).entries).norm();
}

namespace detail {

/// Per-point optimizer seed, so shot noise differs between points but not between reruns.
inline OptimizerConfig point_config(const OptimizerConfig &cfg, int steps, std::uint64_t seed, std::size_t point) {
    OptimizerConfig c = cfg;
    c.max_steps = steps;
    c.seed = stream_seed(seed, "measurement", point);
    return c;
}

inline RealVector point_init(const QhbmModel &model, const SequenceSettings &s, std::size_t point,
                             const SequenceResult &sofar) {
    if (point > 0 && s.init_policy == InitPolicy::chained) {
        return sofar.optima.back();
    }
    Rng rng = make_stream(s.seed, "init", point);
    return model.random_params(rng, s.init_scale);
}

/// History anchors for point `point`: weight zeta^(point - k') on optimum k'.
inline std::shared_ptr<const HistoryTerms> history_for(const QhbmModel &model, const SequenceSettings &s,
                                                       const SequenceResult &sofar, std::size_t point) {
    if (s.zeta == 0.0 || point == 0) {
        return nullptr;
    }
    auto h = std::make_shared<HistoryTerms>();
    for (std::size_t k = 0; k < point; ++k) {
        h->anchors.push_back(evaluate(model, sofar.optima[k]));
        h->weights.push_back(std::pow(s.zeta, static_cast<double>(point - k)));
    }
    return h;
}

inline void finish_point(const QhbmModel &model, SequenceResult &r, Trajectory traj) {
    r.aborted = r.aborted || traj.aborted;
    r.final_fidelity.push_back(traj.last().fidelity);
    RealVector opt = traj.final_params();
    if (!r.optima.empty()) {
        r.metric_variation.push_back(metric_variation(model, r.optima.back(), opt));
    }
    r.optima.push_back(std::move(opt));
    r.runs.push_back(std::move(traj));
}

} // namespace detail

/**
 * VQT over a sweep of inverse temperatures for one Hamiltonian. Point 0 runs
 * `steps_first` steps, later points `steps_rest`; chained points start at the
 * previous optimum. With zeta > 0 and QPMD, point k adds
 * sum_{k'<k} zeta^(k-k') D(rho_{Omega*_k'} || rho_Omega) to the inner objective.
 */
inline SequenceResult chained_optimize(const QhbmModel &model, const HermitianOperator &h,
                                       const std::vector<double> &betas, const OptimizerConfig &cfg,
                                       const SequenceSettings &settings, const RunOptions &opts = {}) {
    settings.validate();
    require(settings.zeta == 0.0 || cfg.kind == OptimizerKind::qpmd, "history terms are only defined for qpmd");
    require(!betas.empty(), "sequence needs at least one point");
    SequenceResult r;
    for (std::size_t k = 0; k < betas.size(); ++k) {
        const int steps = k == 0 ? settings.steps_first : settings.steps_rest;
        const Problem p = make_vqt_problem(model, h, betas[k], gibbs_state(h, betas[k], model.n_qubits()),
                                           detail::history_for(model, settings, r, k));
        const RealVector init = detail::point_init(model, settings, k, r);
        detail::finish_point(model, r, run_optimization(detail::point_config(cfg, steps, settings.seed, k), p, init, opts));
        if (r.aborted) {
            break;
        }
    }
    return r;
}

/// chained_optimize with the history decay set to `zeta`; zeta = 0 is plain chaining.
inline SequenceResult chained_with_history(const QhbmModel &model, const HermitianOperator &h,
                                           const std::vector<double> &betas, const OptimizerConfig &cfg,
                                           SequenceSettings settings, double zeta, const RunOptions &opts = {}) {
    require(zeta == 0.0 || cfg.kind == OptimizerKind::qpmd, "history terms are only defined for qpmd");
    settings.zeta = zeta;
    return chained_optimize(model, h, betas, cfg, settings, opts);
}

/// Mean fidelity over the last `window` records (all records when shorter).
inline double tail_mean_fidelity(const Trajectory &t, std::size_t window = 10) {
    require(!t.records.empty() && window >= 1, "need a non-empty trajectory and window");
    const std::size_t n = std::min(window, t.records.size());
    double s = 0.0;
    for (std::size_t k = t.records.size() - n; k < t.records.size(); ++k) {
        s += t.records[k].fidelity;
    }
    return s / static_cast<double>(n);
}

struct QvartzResult {
    SequenceResult sequence;
    /// Exactly propagated reference states, index 0 being the initial Gibbs state.
    std::vector<DensityOperator> references;
};

/**
 * Recursive propagation. Point 0 is a VQT run against sigma_0 = Gibbs(h0, beta0);
 * point k >= 1 learns, by QMHL, the state V_k rho_{Omega*_{k-1}} V_k^dag.
 * Fidelity is always measured against the reference V_k ... V_1 sigma_0.
 */
inline QvartzResult qvartz_propagate(const QhbmModel &model, const HermitianOperator &h0, double beta0,
                                     const std::vector<ChannelSpec> &channels, const OptimizerConfig &cfg,
                                     const SequenceSettings &settings, const RunOptions &opts = {}) {
    settings.validate();
    QvartzResult out;
    out.references.push_back(gibbs_state(h0, beta0, model.n_qubits()));
    std::vector<ComplexMatrix> unitaries;
    for (const auto &c : channels) {
        require(c.n_qubits == model.n_qubits(), "channel qubit count does not match the model");
        unitaries.push_back(channel_unitary(c));
        out.references.push_back(apply_unitary(unitaries.back(), out.references.back()));
    }
    SequenceResult &r = out.sequence;
    {
        const Problem p = make_vqt_problem(model, h0, beta0, out.references.front());
        const RealVector init = detail::point_init(model, settings, 0, r);
        detail::finish_point(model, r,
                             run_optimization(detail::point_config(cfg, settings.steps_first, settings.seed, 0), p,
                                              init, opts));
    }
    for (std::size_t k = 1; k <= channels.size() && !r.aborted; ++k) {
        const DensityOperator data = apply_unitary(unitaries[k - 1], qhbm_density(model, r.optima.back()));
        const Problem p = make_qmhl_problem(model, data, out.references[k], detail::history_for(model, settings, r, k));
        const RealVector init = detail::point_init(model, settings, k, r);
        detail::finish_point(model, r,
                             run_optimization(detail::point_config(cfg, settings.steps_rest, settings.seed, k), p,
                                              init, opts));
    }
    return out;
}

} // namespace qpgeo

#pragma once

// Experiment configuration, runners and output files for the command-line
// front end. Every run is a pure function of its resolved config: outputs are
// byte-identical on replay unless wall-clock timing is switched on.

#include "qpgeo/problems.hpp"
#include "qpgeo/sequences.hpp"
#include "qpgeo/targets.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace qpgeo::harness {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Configuration problems: malformed files, unknown keys, inconsistent specs.
class ConfigError : public Error {
  public:
    using Error::Error;
};

enum class Experiment { vqt, qmhl, meta_vqt, qvartz, fisher_efficiency, verify };

inline const char *to_string(Experiment e) {
    switch (e) {
    case Experiment::vqt:
        return "vqt";
    case Experiment::qmhl:
        return "qmhl";
    case Experiment::meta_vqt:
        return "meta_vqt";
    case Experiment::qvartz:
        return "qvartz";
    case Experiment::fisher_efficiency:
        return "fisher_efficiency";
    case Experiment::verify:
        return "verify";
    }
    return "?";
}

/// Accepts the config spelling (meta_vqt) and the subcommand spelling (meta-vqt).
inline Experiment experiment_from_string(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    for (const auto e : {Experiment::vqt, Experiment::qmhl, Experiment::meta_vqt, Experiment::qvartz,
                         Experiment::fisher_efficiency, Experiment::verify}) {
        if (s == to_string(e)) {
            return e;
        }
    }
    throw ConfigError("unknown experiment '" + s + "'");
}

struct ModelSpec {
    int n_qubits = 4;
    int layers = 3;
    /// Std. dev. of the random initial parameters; 0.1 often starts QPNGD next to a saddle.
    double init_scale = 1.0;
};

struct TargetSpec {
    double j = 1.0;
    double lambda = 1.0;
    double beta = 2.0;
};

struct ChannelsSpec {
    int intervals = 8;
    double total_time = 40.0;
    int trotter_order = 2;
    ChannelMode mode = ChannelMode::trotter;
    double gp_amplitude = 1.0;
    double gp_length_scale = 1.0;
};

inline std::vector<double> default_betas() {
    std::vector<double> b;
    for (int k = 0; k < 8; ++k) {
        b.push_back(0.5 + 0.25 * k);
    }
    return b;
}

struct SweepSpec {
    std::vector<double> betas = default_betas();
    int steps_first = 500;
    int steps_rest = 100;
    std::vector<InitPolicy> init_policies = {InitPolicy::chained, InitPolicy::independent};
    std::vector<OptimizerKind> optimizers = {OptimizerKind::qpmd, OptimizerKind::adam};
    double zeta = 0.0;
    /// Heat-map values average fidelity over this many final records of each point.
    int heat_window = 10;
    ChannelsSpec channels;
};

struct FisherSpec {
    double mu_star = 0.5;
    int steps = 200;
    int report_every = 10;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    Experiment experiment = Experiment::vqt;
    std::uint64_t seed = 0;
    std::size_t shots = 0;
    int trials = 1;
    int workers = 1;
    bool timing = false;
    std::string output_dir = "out";
    ModelSpec model;
    TargetSpec target;
    OptimizerConfig optimizer;
    SweepSpec sequence;
    FisherSpec fisher;

    void validate() const {
        const auto check = [](bool ok, const std::string &msg) {
            if (!ok) {
                throw ConfigError(msg);
            }
        };
        check(schema_version == kSchemaVersion, "schema_version must be " + std::to_string(kSchemaVersion));
        check(trials >= 1, "trials must be at least 1");
        check(workers >= 1, "workers must be at least 1");
        check(model.n_qubits >= 1 && model.n_qubits <= 8, "model.n_qubits must be in [1, 8]");
        check(model.layers >= 1, "model.layers must be at least 1");
        check(model.init_scale >= 0.0, "model.init_scale must be non-negative");
        check(target.beta >= 0.0, "target.beta must be non-negative");
        const bool tfim = experiment == Experiment::vqt || experiment == Experiment::qmhl ||
                          experiment == Experiment::meta_vqt || experiment == Experiment::qvartz;
        check(!tfim || model.n_qubits >= 2, "model.n_qubits must be at least 2 for TFIM targets");
        check(!sequence.betas.empty(), "sequence.betas must not be empty");
        for (const double b : sequence.betas) {
            check(b >= 0.0, "sequence.betas must be non-negative");
        }
        check(sequence.steps_first >= 1 && sequence.steps_rest >= 1, "sequence step counts must be at least 1");
        check(!sequence.init_policies.empty(), "sequence.init_policies must not be empty");
        check(!sequence.optimizers.empty(), "sequence.optimizers must not be empty");
        check(sequence.zeta >= 0.0 && sequence.zeta < 1.0, "sequence.zeta must be in [0, 1)");
        check(sequence.heat_window >= 1, "sequence.heat_window must be at least 1");
        check(sequence.channels.intervals >= 1, "sequence.channels.intervals must be at least 1");
        check(sequence.channels.total_time > 0.0, "sequence.channels.total_time must be positive");
        check(sequence.channels.trotter_order == 1 || sequence.channels.trotter_order == 2,
              "sequence.channels.trotter_order must be 1 or 2");
        check(sequence.channels.gp_length_scale > 0.0, "sequence.channels.gp_length_scale must be positive");
        check(std::isfinite(fisher.mu_star), "fisher.mu_star must be finite");
        check(fisher.steps >= 1 && fisher.report_every >= 1, "fisher step counts must be at least 1");
        try {
            resolved_optimizer().validate();
            if (experiment == Experiment::meta_vqt || experiment == Experiment::qvartz) {
                for (const auto k : sequence.optimizers) {
                    OptimizerConfig c = resolved_optimizer();
                    c.kind = k;
                    c.validate();
                    check(sequence.zeta == 0.0 || k == OptimizerKind::qpmd,
                          "sequence.zeta > 0 needs qpmd optimizers only");
                }
            }
        } catch (const ConfigError &) {
            throw;
        } catch (const Error &e) {
            throw ConfigError(std::string("optimizer: ") + e.what());
        }
    }

    /// Optimizer block with the top-level shot count applied.
    [[nodiscard]] OptimizerConfig resolved_optimizer() const {
        OptimizerConfig c = optimizer;
        c.shots = shots;
        return c;
    }
};

/// Defaults for an experiment before any config file or flag is applied.
inline RunConfig default_config(Experiment e) {
    RunConfig c;
    c.experiment = e;
    if (e == Experiment::fisher_efficiency) {
        c.optimizer.kind = OptimizerKind::qpngd;
        c.optimizer.lambda = 1.0;
        c.optimizer.schedule = Schedule::one_over_j;
        // Warm start counted as 10 prior steps; without it early full-rate steps diverge.
        c.optimizer.schedule_offset = 10;
        c.shots = 1;
        c.trials = 1000;
    }
    return c;
}

// ---------------------------------------------------------------------------
// JSON reading with unknown-key detection
// ---------------------------------------------------------------------------

namespace detail {

class ObjectReader {
  public:
    ObjectReader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + name() + "' must be an object");
        }
    }

    [[nodiscard]] std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    [[nodiscard]] bool has(const std::string &key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    [[nodiscard]] const json &at(const std::string &key) const { return j_.at(key); }

    void number(const std::string &key, double &out) {
        if (has(key)) {
            const json &v = j_.at(key);
            if (!v.is_number()) {
                throw ConfigError("config: '" + field(key) + "' must be a number");
            }
            out = v.get<double>();
        }
    }

    void integer(const std::string &key, int &out) {
        if (has(key)) {
            const json &v = j_.at(key);
            if (!v.is_number_integer()) {
                throw ConfigError("config: '" + field(key) + "' must be an integer");
            }
            out = v.get<int>();
        }
    }

    void unsigned_integer(const std::string &key, std::uint64_t &out) {
        if (has(key)) {
            const json &v = j_.at(key);
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ConfigError("config: '" + field(key) + "' must be a non-negative integer");
            }
            out = v.get<std::uint64_t>();
        }
    }

    void boolean(const std::string &key, bool &out) {
        if (has(key)) {
            const json &v = j_.at(key);
            if (!v.is_boolean()) {
                throw ConfigError("config: '" + field(key) + "' must be true or false");
            }
            out = v.get<bool>();
        }
    }

    void string(const std::string &key, std::string &out) {
        if (has(key)) {
            const json &v = j_.at(key);
            if (!v.is_string()) {
                throw ConfigError("config: '" + field(key) + "' must be a string");
            }
            out = v.get<std::string>();
        }
    }

    /// Parses a string value with `parse`, reporting parse failures against the field.
    template <class T, class F> void enumeration(const std::string &key, T &out, F parse) {
        std::string s;
        string(key, s);
        if (has(key)) {
            try {
                out = parse(s);
            } catch (const Error &e) {
                throw ConfigError("config: '" + field(key) + "': " + e.what());
            }
        }
    }

    template <class T, class F> void enumeration_list(const std::string &key, std::vector<T> &out, F parse) {
        if (!has(key)) {
            return;
        }
        const json &v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError("config: '" + field(key) + "' must be an array of strings");
        }
        out.clear();
        for (const auto &item : v) {
            if (!item.is_string()) {
                throw ConfigError("config: '" + field(key) + "' must be an array of strings");
            }
            try {
                out.push_back(parse(item.get<std::string>()));
            } catch (const Error &e) {
                throw ConfigError("config: '" + field(key) + "': " + e.what());
            }
        }
    }

    void number_list(const std::string &key, std::vector<double> &out) {
        if (!has(key)) {
            return;
        }
        const json &v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError("config: '" + field(key) + "' must be an array of numbers");
        }
        out.clear();
        for (const auto &item : v) {
            if (!item.is_number()) {
                throw ConfigError("config: '" + field(key) + "' must be an array of numbers");
            }
            out.push_back(item.get<double>());
        }
    }

    /// Throws on the first key that no accessor asked for.
    void finish() const {
        for (const auto &item : j_.items()) {
            if (!seen_.contains(item.key())) {
                throw ConfigError("config: unknown key '" + field(item.key()) + "'");
            }
        }
    }

  private:
    [[nodiscard]] std::string name() const { return path_.empty() ? "<root>" : path_; }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline ChannelMode channel_mode_from_string(const std::string &s) {
    if (s == "trotter") {
        return ChannelMode::trotter;
    }
    if (s == "exact") {
        return ChannelMode::exact;
    }
    throw Error("unknown channel mode '" + s + "'");
}

inline const char *to_string(ChannelMode m) { return m == ChannelMode::trotter ? "trotter" : "exact"; }

inline PinvPolicy::Kind pinv_kind_from_string(const std::string &s) {
    if (s == "pseudo_inverse") {
        return PinvPolicy::Kind::pseudo_inverse;
    }
    if (s == "tikhonov") {
        return PinvPolicy::Kind::tikhonov;
    }
    throw Error("unknown pinv policy '" + s + "'");
}

inline const char *to_string(PinvPolicy::Kind k) {
    return k == PinvPolicy::Kind::pseudo_inverse ? "pseudo_inverse" : "tikhonov";
}

inline void read_optimizer(const json &j, OptimizerConfig &o) {
    ObjectReader r(j, "optimizer");
    r.enumeration("kind", o.kind, optimizer_kind_from_string);
    r.number("learning_rate", o.learning_rate);
    r.number("lambda", o.lambda);
    r.enumeration("schedule", o.schedule, schedule_from_string);
    r.integer("schedule_offset", o.schedule_offset);
    r.integer("inner_steps", o.inner_steps);
    r.number("inner_lr", o.inner_lr);
    r.number("inner_exit_tol", o.inner_exit_tol);
    r.enumeration("pinv", o.pinv.kind, pinv_kind_from_string);
    r.number("pinv_rel_tol", o.pinv.rel_tol);
    r.number("tikhonov_eps", o.pinv.tikhonov_eps);
    r.enumeration("metric", o.metric, metric_kind_from_string);
    r.number("adam_beta1", o.adam_beta1);
    r.number("adam_beta2", o.adam_beta2);
    r.number("adam_eps", o.adam_eps);
    r.integer("max_steps", o.max_steps);
    r.finish();
}

inline void read_sequence(const json &j, SweepSpec &s) {
    ObjectReader r(j, "sequence");
    r.number_list("betas", s.betas);
    r.integer("steps_first", s.steps_first);
    r.integer("steps_rest", s.steps_rest);
    r.enumeration_list("init_policies", s.init_policies, init_policy_from_string);
    r.enumeration_list("optimizers", s.optimizers, optimizer_kind_from_string);
    r.number("zeta", s.zeta);
    r.integer("heat_window", s.heat_window);
    if (r.has("channels")) {
        ObjectReader c(r.at("channels"), "sequence.channels");
        c.integer("intervals", s.channels.intervals);
        c.number("total_time", s.channels.total_time);
        c.integer("trotter_order", s.channels.trotter_order);
        c.enumeration("mode", s.channels.mode, channel_mode_from_string);
        c.number("gp_amplitude", s.channels.gp_amplitude);
        c.number("gp_length_scale", s.channels.gp_length_scale);
        c.finish();
    }
    r.finish();
}

} // namespace detail

/// Parses a config document. "experiment" selects the defaults the other keys override.
inline RunConfig config_from_json(const json &j, std::optional<Experiment> experiment = std::nullopt) {
    detail::ObjectReader r(j, "");
    std::string exp_name;
    r.string("experiment", exp_name);
    Experiment e = experiment.value_or(Experiment::vqt);
    if (!exp_name.empty()) {
        e = experiment_from_string(exp_name);
        if (experiment && *experiment != e) {
            throw ConfigError(std::string("config: 'experiment' is '") + to_string(e) + "' but the subcommand is '" +
                              to_string(*experiment) + "'");
        }
    }
    RunConfig c = default_config(e);
    if (!r.has("schema_version")) {
        throw ConfigError("config: missing 'schema_version'");
    }
    r.integer("schema_version", c.schema_version);
    if (c.schema_version != kSchemaVersion) {
        throw ConfigError("config: 'schema_version' must be " + std::to_string(kSchemaVersion));
    }
    r.unsigned_integer("seed", c.seed);
    std::uint64_t shots = c.shots;
    r.unsigned_integer("shots", shots);
    c.shots = static_cast<std::size_t>(shots);
    r.integer("trials", c.trials);
    r.integer("workers", c.workers);
    r.boolean("timing", c.timing);
    r.string("output_dir", c.output_dir);
    if (r.has("model")) {
        detail::ObjectReader m(r.at("model"), "model");
        m.integer("n_qubits", c.model.n_qubits);
        m.integer("layers", c.model.layers);
        m.number("init_scale", c.model.init_scale);
        m.finish();
    }
    if (r.has("target")) {
        detail::ObjectReader t(r.at("target"), "target");
        t.number("j", c.target.j);
        t.number("lambda", c.target.lambda);
        t.number("beta", c.target.beta);
        t.finish();
    }
    if (r.has("optimizer")) {
        detail::read_optimizer(r.at("optimizer"), c.optimizer);
    }
    if (r.has("sequence")) {
        detail::read_sequence(r.at("sequence"), c.sequence);
    }
    if (r.has("fisher")) {
        detail::ObjectReader f(r.at("fisher"), "fisher");
        f.number("mu_star", c.fisher.mu_star);
        f.integer("steps", c.fisher.steps);
        f.integer("report_every", c.fisher.report_every);
        f.finish();
    }
    r.finish();
    return c;
}

inline RunConfig load_config(const std::filesystem::path &path, std::optional<Experiment> experiment = std::nullopt) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error &e) {
        throw ConfigError("config: malformed JSON in '" + path.string() + "': " + e.what());
    }
    return config_from_json(j, experiment);
}

/// Fully resolved config; parsing it back yields the same RunConfig.
inline json to_json(const RunConfig &c) {
    const OptimizerConfig &o = c.optimizer;
    json opt = {{"kind", to_string(o.kind)},
                {"learning_rate", o.learning_rate},
                {"lambda", o.lambda},
                {"schedule", to_string(o.schedule)},
                {"schedule_offset", o.schedule_offset},
                {"inner_steps", o.inner_steps},
                {"inner_lr", o.inner_lr},
                {"inner_exit_tol", o.inner_exit_tol},
                {"pinv", detail::to_string(o.pinv.kind)},
                {"pinv_rel_tol", o.pinv.rel_tol},
                {"tikhonov_eps", o.pinv.tikhonov_eps},
                {"metric", to_string(o.metric)},
                {"adam_beta1", o.adam_beta1},
                {"adam_beta2", o.adam_beta2},
                {"adam_eps", o.adam_eps},
                {"max_steps", o.max_steps}};
    json policies = json::array();
    for (const auto p : c.sequence.init_policies) {
        policies.push_back(to_string(p));
    }
    json optimizers = json::array();
    for (const auto k : c.sequence.optimizers) {
        optimizers.push_back(to_string(k));
    }
    const ChannelsSpec &ch = c.sequence.channels;
    return {{"schema_version", c.schema_version},
            {"experiment", to_string(c.experiment)},
            {"seed", c.seed},
            {"shots", c.shots},
            {"trials", c.trials},
            {"workers", c.workers},
            {"timing", c.timing},
            {"output_dir", c.output_dir},
            {"model", {{"n_qubits", c.model.n_qubits}, {"layers", c.model.layers}, {"init_scale", c.model.init_scale}}},
            {"target", {{"j", c.target.j}, {"lambda", c.target.lambda}, {"beta", c.target.beta}}},
            {"optimizer", opt},
            {"sequence",
             {{"betas", c.sequence.betas},
              {"steps_first", c.sequence.steps_first},
              {"steps_rest", c.sequence.steps_rest},
              {"init_policies", policies},
              {"optimizers", optimizers},
              {"zeta", c.sequence.zeta},
              {"heat_window", c.sequence.heat_window},
              {"channels",
               {{"intervals", ch.intervals},
                {"total_time", ch.total_time},
                {"trotter_order", ch.trotter_order},
                {"mode", detail::to_string(ch.mode)},
                {"gp_amplitude", ch.gp_amplitude},
                {"gp_length_scale", ch.gp_length_scale}}}}},
            {"fisher",
             {{"mu_star", c.fisher.mu_star}, {"steps", c.fisher.steps}, {"report_every", c.fisher.report_every}}}};
}

/// Worker count: the optional QPGEO_WORKERS environment variable overrides the config.
inline int effective_workers(const RunConfig &c) {
    if (const char *env = std::getenv("QPGEO_WORKERS"); env != nullptr && *env != '\0') {
        char *end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == nullptr || *end != '\0' || v < 1 || v > 1024) {
            throw ConfigError("QPGEO_WORKERS must be an integer in [1, 1024]");
        }
        return static_cast<int>(v);
    }
    return c.workers;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Shortest text that reads back to the same double.
inline std::string fmt(double x) {
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) {
            break;
        }
    }
    return buf;
}

/// JSON number, or null for NaN and infinities.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline void write_file(const std::filesystem::path &path, const std::string &content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << content;
    out.close();
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

inline void write_json(const std::filesystem::path &path, const json &j) { write_file(path, j.dump(2) + "\n"); }

inline constexpr const char *kStepHeader = "step,loss_nats,fidelity,grad_norm,shots_cumulative,wall_ms";

/// Per-step rows for one trajectory; `prefix` columns are prepended verbatim.
inline void append_step_rows(std::ostringstream &os, const Trajectory &t, const std::string &prefix = "") {
    for (const StepRecord &r : t.records) {
        os << prefix << r.step << ',' << fmt(r.loss) << ',' << fmt(r.fidelity) << ',' << fmt(r.grad_norm) << ','
           << r.shots_cumulative << ',' << fmt(r.wall_ms) << '\n';
    }
}

/// steps.csv: header plus one row per record (records = steps + 1).
inline std::string steps_csv(const Trajectory &t) {
    std::ostringstream os;
    os << kStepHeader << '\n';
    append_step_rows(os, t);
    return os.str();
}

/// curve.csv for a set of trajectories: per-step means over the trajectories reaching that step.
inline std::string curve_csv(const std::vector<const Trajectory *> &runs) {
    std::ostringstream os;
    os << "step,loss_nats,fidelity\n";
    std::size_t len = 0;
    for (const auto *t : runs) {
        len = std::max(len, t->records.size());
    }
    for (std::size_t k = 0; k < len; ++k) {
        double loss = 0.0;
        double fid = 0.0;
        int n = 0;
        int step = 0;
        for (const auto *t : runs) {
            if (k < t->records.size()) {
                loss += t->records[k].loss;
                fid += t->records[k].fidelity;
                step = t->records[k].step;
                ++n;
            }
        }
        os << step << ',' << fmt(loss / n) << ',' << fmt(fid / n) << '\n';
    }
    return os.str();
}

inline json shift_tally(const Trajectory &t) {
    return {{"per_step", t.shifts_per_step},
            {"cumulative", t.records.empty() ? 0 : t.records.back().shifts_cumulative}};
}

inline json trajectory_summary(const Trajectory &t) {
    json j = {{"steps", t.records.empty() ? 0 : t.records.back().step},
              {"aborted", t.aborted},
              {"abort_reason", t.abort_reason},
              {"shift_tally", shift_tally(t)},
              {"shots_cumulative", t.records.empty() ? 0 : t.records.back().shots_cumulative}};
    if (!t.records.empty()) {
        j["final_loss"] = num(t.last().loss);
        j["final_fidelity"] = num(t.last().fidelity);
    }
    return j;
}

/// Mean and 95% normal-approximation half-width 1.96 s / sqrt(n).
struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
};

inline MeanCi mean_ci(const std::vector<double> &v) {
    require(!v.empty(), "mean of an empty sample");
    double s = 0.0;
    for (const double x : v) {
        s += x;
    }
    const double n = static_cast<double>(v.size());
    const double mean = s / n;
    if (v.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (const double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, 1.96 * std::sqrt(ss / (n - 1.0) / n)};
}

// ---------------------------------------------------------------------------
// Trial scheduling
// ---------------------------------------------------------------------------

/// Seed of trial `t`: all of a trial's streams derive from it.
inline std::uint64_t trial_seed(std::uint64_t seed, int t) {
    return stream_seed(seed, "trial-index", static_cast<std::uint64_t>(t));
}

/// Runs fn(t) for t in [0, n) on up to `workers` threads; results land in index order.
template <class R, class F> std::vector<R> parallel_trials(int n, int workers, F fn) {
    std::vector<R> out(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        for (int t = next++; t < n; t = next++) {
            try {
                out[static_cast<std::size_t>(t)] = fn(t);
            } catch (...) {
                const std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = n;
            }
        }
    };
    const int threads = std::max(1, std::min(workers, n));
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back(work);
        }
        for (auto &th : pool) {
            th.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

inline std::filesystem::path trial_dir(const std::filesystem::path &out, int t) {
    return out / ("trial_" + std::to_string(t));
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct RunOutcome {
    bool aborted = false;
    json summary;
};

inline RunOptions run_options(const RunConfig &c) { return {c.timing, false}; }

inline TfimSpec tfim_of(const RunConfig &c) { return {c.model.n_qubits, c.target.j, c.target.lambda}; }

/// VQT or QMHL against the TFIM Gibbs state, one trajectory per trial.
inline RunOutcome run_single(const RunConfig &c, const std::filesystem::path &out) {
    const QhbmModel model(c.model.n_qubits, c.model.layers);
    const TfimSpec tfim = tfim_of(c);
    const HermitianOperator h = tfim_hamiltonian(tfim);
    const DensityOperator target = gibbs_state(h, c.target.beta, c.model.n_qubits);
    const Problem problem = c.experiment == Experiment::vqt ? make_vqt_problem(model, h, c.target.beta, target)
                                                            : make_qmhl_problem(model, target);
    const auto trajectories = parallel_trials<Trajectory>(c.trials, effective_workers(c), [&](int t) {
        const std::uint64_t seed = trial_seed(c.seed, t);
        Rng rng = make_stream(seed, "init");
        OptimizerConfig oc = c.resolved_optimizer();
        oc.seed = seed;
        Trajectory traj = run_optimization(oc, problem, model.random_params(rng, c.model.init_scale), run_options(c));
        write_file(trial_dir(out, t) / "steps.csv", steps_csv(traj));
        json s = trajectory_summary(traj);
        s["trial"] = t;
        s["seed"] = seed;
        s["q"] = model.n_phi();
        write_json(trial_dir(out, t) / "summary.json", s);
        return traj;
    });
    std::vector<const Trajectory *> runs;
    std::vector<double> final_loss;
    std::vector<double> final_fid;
    RunOutcome r;
    for (const auto &t : trajectories) {
        runs.push_back(&t);
        final_loss.push_back(t.last().loss);
        final_fid.push_back(t.last().fidelity);
        r.aborted = r.aborted || t.aborted;
    }
    write_file(out / "curve.csv", curve_csv(runs));
    const MeanCi fl = mean_ci(final_loss);
    const MeanCi ff = mean_ci(final_fid);
    r.summary = {{"experiment", to_string(c.experiment)},
                 {"trials", c.trials},
                 {"final_loss", num(fl.mean)},
                 {"final_loss_ci_half_width", num(fl.half_width)},
                 {"final_fidelity", num(ff.mean)},
                 {"final_fidelity_ci_half_width", num(ff.half_width)},
                 {"shift_tally", shift_tally(trajectories.front())},
                 {"q", model.n_phi()},
                 {"aborted", r.aborted}};
    return r;
}

/// One (init policy, optimizer) sequence of one trial, reduced to what the files need.
struct SequenceCell {
    InitPolicy policy = InitPolicy::chained;
    OptimizerKind optimizer = OptimizerKind::qpmd;
    SequenceResult result;
    std::vector<double> heat;
};

inline std::string policy_optimizer_name(InitPolicy p, OptimizerKind k) {
    return std::string(to_string(p)) + "_" + to_string(k);
}

/// Per-point rows: point, step, loss, fidelity, ... for every point of a sequence.
inline std::string sequence_csv(const SequenceResult &r) {
    std::ostringstream os;
    os << "point_index," << kStepHeader << '\n';
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
        append_step_rows(os, r.runs[k], std::to_string(k) + ",");
    }
    return os.str();
}

/// Sequence experiments: every trial runs each init policy with each optimizer.
inline RunOutcome run_sequences(const RunConfig &c, const std::filesystem::path &out) {
    const QhbmModel model(c.model.n_qubits, c.model.layers);
    const TfimSpec tfim = tfim_of(c);
    const HermitianOperator h = tfim_hamiltonian(tfim);
    const bool qvartz = c.experiment == Experiment::qvartz;
    DriveSequence drive;
    if (qvartz) {
        // Drives come from the base seed so every trial and optimizer sees the same channels.
        const ChannelsSpec &ch = c.sequence.channels;
        drive = gp_driven_channels(tfim, ch.intervals, ch.total_time, c.seed, ch.trotter_order, ch.mode,
                                   ch.gp_amplitude, ch.gp_length_scale);
    }
    const std::size_t n_points = qvartz ? drive.channels.size() + 1 : c.sequence.betas.size();
    const auto window = static_cast<std::size_t>(c.sequence.heat_window);

    const auto trials = parallel_trials<std::vector<SequenceCell>>(c.trials, effective_workers(c), [&](int t) {
        const std::uint64_t seed = trial_seed(c.seed, t);
        std::vector<SequenceCell> cells;
        std::ostringstream points;
        points << "init_policy,optimizer,point_index,heat_fidelity,final_fidelity,metric_variation\n";
        json summary = {{"trial", t}, {"seed", seed}};
        for (const auto policy : c.sequence.init_policies) {
            for (const auto kind : c.sequence.optimizers) {
                SequenceSettings s;
                s.steps_first = c.sequence.steps_first;
                s.steps_rest = c.sequence.steps_rest;
                s.init_policy = policy;
                s.zeta = c.sequence.zeta;
                s.init_scale = c.model.init_scale;
                s.seed = seed;
                OptimizerConfig oc = c.resolved_optimizer();
                oc.kind = kind;
                SequenceCell cell{policy, kind, {}, {}};
                cell.result = qvartz ? qvartz_propagate(model, h, c.target.beta, drive.channels, oc, s,
                                                        run_options(c))
                                           .sequence
                                     : chained_optimize(model, h, c.sequence.betas, oc, s, run_options(c));
                const std::string name = policy_optimizer_name(policy, kind);
                write_file(trial_dir(out, t) / (name + ".csv"), sequence_csv(cell.result));
                json mv = json::array();
                for (std::size_t k = 0; k < cell.result.runs.size(); ++k) {
                    cell.heat.push_back(tail_mean_fidelity(cell.result.runs[k], window));
                    points << to_string(policy) << ',' << to_string(kind) << ',' << k << ',' << fmt(cell.heat.back())
                           << ',' << fmt(cell.result.final_fidelity[k]) << ','
                           << (k == 0 ? "nan" : fmt(cell.result.metric_variation[k - 1])) << '\n';
                }
                for (const double v : cell.result.metric_variation) {
                    mv.push_back(num(v));
                }
                json per = {{"aborted", cell.result.aborted},
                            {"final_fidelity", num(cell.result.final_fidelity.back())},
                            {"final_loss", num(cell.result.runs.back().last().loss)},
                            {"metric_variation", mv},
                            {"shift_tally_per_step", cell.result.runs.front().shifts_per_step}};
                summary[name] = per;
                cells.push_back(std::move(cell));
            }
        }
        write_file(trial_dir(out, t) / "points.csv", points.str());
        write_json(trial_dir(out, t) / "summary.json", summary);
        return cells;
    });

    RunOutcome r;
    std::ostringstream heat;
    heat << "point_index,init_policy,optimizer,mean_fidelity,ci_half_width\n";
    std::ostringstream curve;
    curve << "init_policy,optimizer,point_index,step,loss_nats,fidelity\n";
    json cells_summary = json::object();
    const std::size_t n_cells = trials.front().size();
    for (std::size_t cidx = 0; cidx < n_cells; ++cidx) {
        const SequenceCell &proto = trials.front()[cidx];
        const std::string name = policy_optimizer_name(proto.policy, proto.optimizer);
        std::vector<double> all;
        std::vector<double> final_all;
        for (std::size_t k = 0; k < n_points; ++k) {
            std::vector<double> v;
            std::vector<const Trajectory *> runs;
            for (const auto &tr : trials) {
                const SequenceCell &cell = tr[cidx];
                r.aborted = r.aborted || cell.result.aborted;
                if (k < cell.heat.size()) {
                    v.push_back(cell.heat[k]);
                    runs.push_back(&cell.result.runs[k]);
                    final_all.push_back(cell.result.final_fidelity[k]);
                }
            }
            if (v.empty()) {
                continue;
            }
            all.insert(all.end(), v.begin(), v.end());
            const MeanCi m = mean_ci(v);
            heat << k << ',' << to_string(proto.policy) << ',' << to_string(proto.optimizer) << ',' << fmt(m.mean)
                 << ',' << fmt(m.half_width) << '\n';
            std::istringstream rows(curve_csv(runs));
            std::string line;
            std::getline(rows, line);
            while (std::getline(rows, line)) {
                curve << to_string(proto.policy) << ',' << to_string(proto.optimizer) << ',' << k << ',' << line
                      << '\n';
            }
        }
        cells_summary[name] = {{"mean_heat_fidelity", num(mean_ci(all).mean)},
                               {"mean_final_fidelity", num(mean_ci(final_all).mean)}};
    }
    write_file(out / "heat.csv", heat.str());
    write_file(out / "curve.csv", curve.str());
    r.summary = {{"experiment", to_string(c.experiment)},
                 {"trials", c.trials},
                 {"points", n_points},
                 {"heat_window", c.sequence.heat_window},
                 {"cells", cells_summary},
                 {"q", model.n_phi()},
                 {"aborted", r.aborted}};
    if (qvartz) {
        json chans = json::array();
        for (std::size_t k = 0; k < drive.channels.size(); ++k) {
            chans.push_back({{"midpoint", num(drive.midpoints[k])},
                             {"j", num(drive.tfims[k].j)},
                             {"lambda", num(drive.tfims[k].lambda)},
                             {"substeps", drive.channels[k].substeps},
                             {"trotter_error", num(trotter_error(drive.channels[k]))}});
        }
        r.summary["channels"] = chans;
    }
    return r;
}

/// Empirical variance of mu_j over trials against I(mu*)^-1 / j at one reporting step.
struct FisherRow {
    int j = 0;
    double mean_mu = 0.0;
    double empirical_var = 0.0;
    double predicted_var = 0.0;

    [[nodiscard]] double ratio() const { return empirical_var / predicted_var; }
};

struct FisherResult {
    std::vector<FisherRow> rows;
    double info = 0.0;
    bool aborted = false;
};

/**
 * Online QPNGD with step 1/j on rho_mu = exp(-mu Z)/Z from the warm start mu*,
 * one data sample per step. Trial t uses the seed trial_seed(seed, t).
 */
inline FisherResult fisher_efficiency(const OptimizerConfig &base, const FisherSpec &spec, int trials,
                                      std::uint64_t seed, int workers) {
    const std::vector<PauliString> basis = {PauliString("Z")};
    RealVector mu_star(1);
    mu_star << spec.mu_star;
    const ExpFamilyModel truth(basis, mu_star);
    const Problem problem = make_ef_learning_problem(basis, ef_density(truth));
    FisherResult out;
    out.info = ef_bkm_info_matrix(truth).entries(0, 0);
    std::vector<int> report;
    for (int j = spec.report_every; j <= spec.steps; j += spec.report_every) {
        report.push_back(j);
    }
    if (report.empty() || report.back() != spec.steps) {
        report.push_back(spec.steps);
    }
    struct TrialMu {
        std::vector<double> mu;
        bool aborted = false;
    };
    const auto per_trial = parallel_trials<TrialMu>(trials, workers, [&](int t) {
        OptimizerConfig oc = base;
        oc.max_steps = spec.steps;
        oc.seed = trial_seed(seed, t);
        RunOptions opts;
        opts.keep_all_params = true;
        const Trajectory traj = run_optimization(oc, problem, mu_star, opts);
        TrialMu r;
        r.aborted = traj.aborted;
        for (const int j : report) {
            const std::size_t k = std::min(static_cast<std::size_t>(j), traj.records.size() - 1);
            r.mu.push_back(traj.records[k].params(0));
        }
        return r;
    });
    for (std::size_t i = 0; i < report.size(); ++i) {
        double s = 0.0;
        double ss = 0.0;
        for (const auto &tr : per_trial) {
            s += tr.mu[i];
        }
        const double mean = s / trials;
        for (const auto &tr : per_trial) {
            ss += (tr.mu[i] - mean) * (tr.mu[i] - mean);
        }
        FisherRow row;
        row.j = report[i];
        row.mean_mu = mean;
        row.empirical_var = trials > 1 ? ss / (trials - 1) : 0.0;
        row.predicted_var = 1.0 / (out.info * report[i]);
        out.rows.push_back(row);
    }
    for (const auto &tr : per_trial) {
        out.aborted = out.aborted || tr.aborted;
    }
    return out;
}

inline RunOutcome run_fisher(const RunConfig &c, const std::filesystem::path &out) {
    const FisherResult f = fisher_efficiency(c.resolved_optimizer(), c.fisher, c.trials, c.seed, effective_workers(c));
    std::ostringstream os;
    os << "j,mean_mu,empirical_var,predicted_var,ratio\n";
    for (const auto &row : f.rows) {
        os << row.j << ',' << fmt(row.mean_mu) << ',' << fmt(row.empirical_var) << ',' << fmt(row.predicted_var)
           << ',' << fmt(row.ratio()) << '\n';
    }
    write_file(out / "fisher.csv", os.str());
    RunOutcome r;
    r.aborted = f.aborted;
    r.summary = {{"experiment", to_string(c.experiment)},
                 {"trials", c.trials},
                 {"mu_star", num(c.fisher.mu_star)},
                 {"information", num(f.info)},
                 {"final_j", f.rows.back().j},
                 {"final_ratio", num(f.rows.back().ratio())},
                 {"aborted", r.aborted}};
    return r;
}

/// Runs a non-verify experiment and writes config.json, summary.json and its data files.
inline RunOutcome run_experiment(const RunConfig &c) {
    c.validate();
    require(c.experiment != Experiment::verify, "verify is run by the verification driver");
    const std::filesystem::path out(c.output_dir);
    std::filesystem::create_directories(out);
    write_json(out / "config.json", to_json(c));
    RunOutcome r;
    switch (c.experiment) {
    case Experiment::vqt:
    case Experiment::qmhl:
        r = run_single(c, out);
        break;
    case Experiment::meta_vqt:
    case Experiment::qvartz:
        r = run_sequences(c, out);
        break;
    case Experiment::fisher_efficiency:
        r = run_fisher(c, out);
        break;
    case Experiment::verify:
        break;
    }
    write_json(out / "summary.json", r.summary);
    return r;
}

} // namespace qpgeo::harness

// qpgeo command-line driver: one subcommand per experiment plus `verify`.
// Exit codes: 0 success, 1 configuration or argument error, 2 numerical abort
// (or any failed criterion under `verify`).

#include "qpgeo/verify.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace qpgeo;
using harness::Experiment;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> shots;
    std::string optimizer;
    std::string out;
    std::optional<int> trials;
    std::optional<int> workers;
    bool timing = false;
};

void add_common(CLI::App &cmd, Overrides &o) {
    cmd.add_option("--config", o.config, "JSON config file");
    cmd.add_option("--seed", o.seed, "base RNG seed");
    cmd.add_option("--shots", o.shots, "shots per estimate (0 = exact)");
    cmd.add_option("--optimizer", o.optimizer, "sgd | adam | qpngd | qpmd | lagrange");
    cmd.add_option("--out", o.out, "output directory");
    cmd.add_option("--trials", o.trials, "number of seeded trials");
    cmd.add_option("--workers", o.workers, "worker threads");
    cmd.add_flag("--timing", o.timing, "record wall-clock milliseconds per step");
}

harness::RunConfig resolve(Experiment e, const Overrides &o) {
    harness::RunConfig c = o.config.empty() ? harness::default_config(e) : harness::load_config(o.config, e);
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (o.shots) {
        c.shots = *o.shots;
    }
    if (!o.optimizer.empty()) {
        try {
            c.optimizer.kind = optimizer_kind_from_string(o.optimizer);
        } catch (const Error &err) {
            throw harness::ConfigError(std::string("--optimizer: ") + err.what());
        }
        c.sequence.optimizers = {c.optimizer.kind};
    }
    if (!o.out.empty()) {
        c.output_dir = o.out;
    }
    if (o.trials) {
        c.trials = *o.trials;
    }
    if (o.workers) {
        c.workers = *o.workers;
    }
    c.timing = c.timing || o.timing;
    c.validate();
    return c;
}

int run_verify(const Overrides &o, const std::vector<int> &ids) {
    verify::VerifyOptions v;
    if (o.seed) {
        v.seed = *o.seed;
    }
    if (o.workers) {
        v.workers = *o.workers;
    }
    if (!o.out.empty()) {
        v.scratch = o.out;
    }
    std::vector<int> which = ids;
    if (which.empty()) {
        for (int id = 1; id <= verify::kCriterionCount; ++id) {
            which.push_back(id);
        }
    }
    bool all = true;
    for (const int id : which) {
        const verify::CriterionResult r = verify::run_criterion(id, v);
        std::cout << verify::format_line(r) << std::endl;
        all = all && r.passed;
    }
    return all ? 0 : 2;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Quantum-probabilistic geometric optimization experiments"};
    app.require_subcommand(1);
    Overrides o;
    std::vector<int> criteria;
    const std::pair<const char *, Experiment> commands[] = {
        {"vqt", Experiment::vqt},
        {"qmhl", Experiment::qmhl},
        {"meta-vqt", Experiment::meta_vqt},
        {"qvartz", Experiment::qvartz},
        {"fisher-efficiency", Experiment::fisher_efficiency},
        {"verify", Experiment::verify},
    };
    std::vector<std::pair<CLI::App *, Experiment>> subs;
    for (const auto &[name, e] : commands) {
        CLI::App *cmd = app.add_subcommand(name, std::string("run the ") + name + " experiment");
        add_common(*cmd, o);
        if (e == Experiment::verify) {
            cmd->description("run the acceptance checks and print one line per criterion");
            cmd->add_option("--criteria", criteria, "criterion ids to run (default: all)")
                ->check(CLI::Range(1, verify::kCriterionCount));
        }
        subs.emplace_back(cmd, e);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    Experiment e = Experiment::vqt;
    for (const auto &[cmd, exp] : subs) {
        if (cmd->parsed()) {
            e = exp;
        }
    }
    try {
        if (e == Experiment::verify) {
            return run_verify(o, criteria);
        }
        const harness::RunConfig c = resolve(e, o);
        const harness::RunOutcome r = harness::run_experiment(c);
        std::cout << r.summary.dump(2) << std::endl;
        if (r.aborted) {
            std::cerr << "numerical abort: non-finite loss or gradient; partial records written to " << c.output_dir
                      << std::endl;
            return 2;
        }
        return 0;
    } catch (const harness::ConfigError &err) {
        std::cerr << "config error: " << err.what() << std::endl;
        return 1;
    } catch (const std::exception &err) {
        std::cerr << "error: " << err.what() << std::endl;
        return 2;
    }
}

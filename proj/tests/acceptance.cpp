// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails. Tolerances live in verify.hpp.
// Usage: qpgeo_acceptance [id ...]   (no ids = all criteria)

#include "qpgeo/verify.hpp"

#include <iostream>

int main(int argc, char **argv) {
    qpgeo::verify::VerifyOptions opts;
    opts.scratch = std::filesystem::temp_directory_path() / "qpgeo-acceptance";
    opts.workers = qpgeo::harness::effective_workers(qpgeo::harness::RunConfig{});
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) {
        ids.push_back(std::atoi(argv[i]));
    }
    if (ids.empty()) {
        for (int id = 1; id <= qpgeo::verify::kCriterionCount; ++id) {
            ids.push_back(id);
        }
    }
    bool all = true;
    for (const int id : ids) {
        const qpgeo::verify::CriterionResult r = qpgeo::verify::run_criterion(id, opts);
        std::cout << qpgeo::verify::format_line(r) << std::endl;
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

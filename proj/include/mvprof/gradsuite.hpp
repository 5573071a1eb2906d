#pragma once

#include <string>
#include <vector>

namespace mvprof {

// Finite-difference verification suites over randomized instances of every
// differentiable op and block. Shared by the CLI `gradcheck` subcommand and
// the acceptance tests.
struct GradSuiteLine {
    std::string name;
    double max_rel_error = 0.0;
    std::string worst_param;
    int instances = 0;
};

struct GradSuiteReport {
    std::vector<GradSuiteLine> lines;
    double max_rel_error = 0.0;
    int total_instances = 0;
    double tolerance = 1e-5;

    bool passed() const { return max_rel_error < tolerance; }
};

// module: "all" | "fusion" | "agp" | "lm". "all" adds the tensor-core op
// suite and the LoRA layer suite.
GradSuiteReport run_grad_suites(const std::string& module,
                                std::uint64_t seed = 20240901,
                                int instances_per_case = 10);

} // namespace mvprof

#pragma once
// Built-in oracle suite behind the selftest subcommand: golden equation
// values recomputed by direct evaluation, finite-difference gradient spot
// checks, and a scalar-vs-vectorized kernel comparison.

#include <string>
#include <vector>

namespace nlss {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;  // filled on failure
};

std::vector<CheckResult> run_selfchecks();

} // namespace nlss

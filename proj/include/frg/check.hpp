#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace frg {

struct CriterionResult {
    int index = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

// Runs the built-in invariant suite (pinned models, pinned tolerances),
// streaming one pass/fail line per criterion to `progress`. Exceptions are
// captured into the corresponding result; this function does not throw.
std::vector<CriterionResult> run_acceptance_suite(std::ostream& progress);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace frg

#include <iostream>

#include "frg/check.hpp"

int main() {
    std::vector<frg::CriterionResult> results = frg::run_acceptance_suite(std::cout);
    return frg::all_passed(results) ? 0 : 1;
}

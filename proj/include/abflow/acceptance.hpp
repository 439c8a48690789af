// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance suite: twelve numbered checks covering the bridge
// solver, the transform identities, the free-convolution semigroup, the
// finite-N references and the coupled-model solvers, each with tolerances
// pinned in code. Intended to run as a single long binary.
#pragma once

#include <functional>
#include <string>
#include <vector>

namespace abflow {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;     // measured numbers vs the pinned tolerance
    double seconds = 0.0;
};

// Runs all twelve criteria in order; on_result (if given) is invoked after
// each one so progress can be reported while the suite is still running.
// A criterion that throws is reported as failed with the exception text.
std::vector<CriterionResult> run_acceptance(
    const std::function<void(const CriterionResult&)>& on_result = {});

}  // namespace abflow

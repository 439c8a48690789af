// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: prints one pass/fail line per criterion and exits
// nonzero if any criterion fails.
#include <algorithm>
#include <cstdio>

#include "abflow/acceptance.hpp"

int main() {
    bool all = true;
    const auto results = abflow::run_acceptance([](const abflow::CriterionResult& r) {
        std::printf("[%s] criterion %2d: %s -- %s (%.1f s)\n", r.pass ? "PASS" : "FAIL", r.id,
                    r.name.c_str(), r.detail.c_str(), r.seconds);
        std::fflush(stdout);
    });
    for (const auto& r : results) all = all && r.pass;
    std::printf("%s: %zu/%zu criteria passed\n", all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                std::size_t(std::count_if(results.begin(), results.end(),
                                          [](const auto& r) { return r.pass; })),
                results.size());
    return all ? 0 : 1;
}

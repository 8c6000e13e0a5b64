#pragma once

#include <string>

namespace cloth {

struct VerifyReport {
    int checks = 0;
    int failures = 0;
    std::string log;
    bool ok() const { return failures == 0; }
};

// Randomized property suites: "hmm" (kernel vs flatten identity), "ot"
// (marginal feasibility + assignment agreement), "grad" (finite-difference
// checks of every loss), "entropy" (bounds of the entropy objective), or
// "all". Failures reproduce their inputs in the log.
VerifyReport run_verify(const std::string& suite);

}  // namespace cloth

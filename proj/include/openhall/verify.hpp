#pragma once

#include <string>
#include <vector>

namespace openhall {

struct VerifyCheck {
    std::string suite, name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct VerifyOptions {
    std::string suite = "all";     // all | core | models | hall | response | cavity
    std::string mutation = "none"; // closed-form-sign flips one closed-form q term
    int workers = 1;
};

const std::vector<std::string>& verify_suites();

// Throws ConfigError for an unknown suite.
std::vector<VerifyCheck> run_verify(const VerifyOptions& opt);

// {"openhall_version", "suite", "mutation", "pass", "checks": [...]}
std::string verify_report(const VerifyOptions& opt, const std::vector<VerifyCheck>& checks);

} // namespace openhall

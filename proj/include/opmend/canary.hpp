#pragma once
// Sandboxed canary testing. Strict mode replays eight cases and commits at
// CSR >= 0.8; with fewer cases available, low-power mode evaluates whatever
// exists and rejects on any observed failure.

#include "opmend/operators.hpp"
#include "opmend/trace.hpp"

#include <functional>

namespace opmend {

enum class SandboxOutcome { PASS, MITIGATED, FAIL };

using SandboxFn = std::function<SandboxOutcome(const FailureTrace&, const Operator&)>;

enum class CanaryMode { STRICT, LOW_POWER };

struct CanaryReport {
    size_t n_canary = 0;
    size_t n_pass = 0;
    size_t n_mitigated = 0;
    double csr = 0.0;
    CanaryMode mode = CanaryMode::LOW_POWER;
    bool passed = false;
};

inline CanaryReport run_canary(const Operator& patched,
                               const std::vector<const FailureTrace*>& cases,
                               const SandboxFn& sandbox, size_t strict_n = 8,
                               double tau_canary = 0.8) {
    CanaryReport rep;
    rep.mode = cases.size() >= strict_n ? CanaryMode::STRICT : CanaryMode::LOW_POWER;
    size_t n = rep.mode == CanaryMode::STRICT ? strict_n : cases.size();
    rep.n_canary = n;
    if (n == 0) return rep;  // no evidence, no commit
    size_t n_fail = 0;
    for (size_t i = 0; i < n; ++i) {
        switch (sandbox(*cases[i], patched)) {
            case SandboxOutcome::PASS: ++rep.n_pass; break;
            case SandboxOutcome::MITIGATED: ++rep.n_mitigated; break;
            case SandboxOutcome::FAIL: ++n_fail; break;
        }
    }
    rep.csr = (static_cast<double>(rep.n_pass) + 0.5 * static_cast<double>(rep.n_mitigated)) /
              static_cast<double>(n);
    rep.passed = rep.mode == CanaryMode::STRICT ? rep.csr >= tau_canary : n_fail == 0;
    return rep;
}

}  // namespace opmend

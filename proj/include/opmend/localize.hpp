#pragma once
// Failure localization: responsibility scores over the operators appearing in
// the trace window, softmax over phi.w with ties broken toward the operator
// that actually failed.

#include "opmend/pkg.hpp"
#include "opmend/trace.hpp"

#include <cmath>

namespace opmend {

struct LocalizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResponsibilityScore {
    std::string op_name;
    std::array<double, 3> phi{};  // symbolic delta, tool-log similarity, parser confidence
    double score = 0.0;
};

struct LocalizeWeights {
    std::array<double, 3> w{1.0, 1.0, 0.5};
};

namespace detail {

// Fraction of the instance's expected add effects missing from the failure
// state. Succeeded actions have their effects in place; the failing action
// never applied them.
inline double symbolic_delta(const ProcessKnowledgeGraph& pkg, const PlanStep& step,
                             const SymbolicState& at_failure) {
    if (!pkg.has_operator(step.op_name)) return 0.0;
    const Operator& op = pkg.op(step.op_name);
    size_t adds = 0, missing = 0;
    for (const auto& e : grounded_eff(op, step)) {
        if (e.negated || !e.ground()) continue;
        ++adds;
        if (!at_failure.holds(e)) ++missing;
    }
    if (adds == 0) return 0.0;
    return static_cast<double>(missing) / static_cast<double>(adds);
}

inline double tool_log_similarity(const ErrorRecord& err, const std::string& op_name) {
    std::string needle = lower_copy(op_name);
    if (lower_copy(err.message).find(needle) != std::string::npos) return 1.0;
    for (const auto& [k, v] : err.evidence)
        if (lower_copy(v).find(needle) != std::string::npos) return 1.0;
    return 0.0;
}

inline double parser_confidence(const FailureTrace& trace, const PlanStep& step) {
    if (auto it = trace.error.evidence.find("parser_confidence");
        it != trace.error.evidence.end()) {
        try {
            return std::clamp(std::stod(it->second), 0.0, 1.0);
        } catch (...) {
        }
    }
    return step.unbound_count() == 0 ? 1.0 : 0.5;
}

}  // namespace detail

// Returns all candidates, normalized (scores sum to 1), best first.
inline std::vector<ResponsibilityScore> localize(const FailureTrace& trace,
                                                 const ProcessKnowledgeGraph& pkg,
                                                 const LocalizeWeights& weights = {}) {
    // Candidates: distinct operators in the trace window, failing one included.
    std::vector<PlanStep> window = trace.actions;
    if (std::find(window.begin(), window.end(), trace.failed_step) == window.end())
        window.push_back(trace.failed_step);
    std::map<std::string, PlanStep> by_op;
    for (auto it = window.rbegin(); it != window.rend(); ++it) {
        if (it->op_name.empty()) continue;
        by_op.emplace(it->op_name, *it);  // latest instance wins
    }
    if (by_op.empty()) throw LocalizeError("empty candidate set in failure trace");

    std::vector<ResponsibilityScore> out;
    double max_logit = -1e300;
    for (const auto& [name, step] : by_op) {
        ResponsibilityScore r;
        r.op_name = name;
        r.phi[0] = detail::symbolic_delta(pkg, step, trace.state_at_failure);
        r.phi[1] = detail::tool_log_similarity(trace.error, name);
        r.phi[2] = detail::parser_confidence(trace, step);
        r.score = r.phi[0] * weights.w[0] + r.phi[1] * weights.w[1] + r.phi[2] * weights.w[2];
        max_logit = std::max(max_logit, r.score);
        out.push_back(std::move(r));
    }
    double denom = 0.0;
    for (auto& r : out) {
        r.score = std::exp(r.score - max_logit);
        denom += r.score;
    }
    for (auto& r : out) r.score /= denom;

    std::stable_sort(out.begin(), out.end(),
                     [&](const ResponsibilityScore& a, const ResponsibilityScore& b) {
                         if (a.score != b.score) return a.score > b.score;
                         bool af = a.op_name == trace.failed_operator;
                         bool bf = b.op_name == trace.failed_operator;
                         if (af != bf) return af;
                         return a.op_name < b.op_name;
                     });
    return out;
}

}  // namespace opmend

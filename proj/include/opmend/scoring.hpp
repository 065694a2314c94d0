#pragma once
// Four-dimensional patch scoring plus the EDCR systematic-error pre-filter.
// Aggregate = 0.40*plaus + 0.25*cons + 0.25*util - 0.10*risk - lambda_budget.

#include "opmend/controller.hpp"  // sigmoid
#include "opmend/knowledge_graphs.hpp"
#include "opmend/patch.hpp"
#include "opmend/satcheck.hpp"
#include "opmend/trace.hpp"

#include <functional>

namespace opmend {

struct ScoreWeights {
    double plausibility = 0.40;
    double consistency = 0.25;
    double utility = 0.25;
    double risk = 0.10;
};

// Structural-fit rubric used by the plausibility surrogate: evidence mention
// dominates, correct scope and class/edit-type affinity contribute, the bias
// centers unrelated patches at or below 0.5.
struct PlausibilityRubric {
    double w_mention = 3.0;
    double w_scope = 0.6;
    double w_affinity = 0.4;
    double bias = -1.0;
};

struct ScoringConfig {
    ScoreWeights weights;
    double theta = 0.18;            // acceptance threshold on the aggregate
    double p_alpha = 0.25;          // EDCR baseline residual
    double lambda_penalty = 0.05;   // flat budget penalty once regulation budget is hit
    double b_regulate = 2.0;        // seconds of simulated FDKA time per episode
    double cold_start_relax = 0.5;  // theta multiplier when the replay pool is thin
    size_t k_retrieve = 20;
    PlausibilityRubric rubric;
};

struct ScoreBreakdown {
    double s_plaus = 0.0;
    double s_cons = 0.0;
    double s_util = 0.0;
    double s_risk = 0.0;
    double lambda_budget = 0.0;
    double aggregate = 0.0;
    bool cold_start = false;
    size_t k_retrieved = 0;
    size_t n_prevent = 0;
    size_t n_mitigate = 0;
};

inline double aggregate_score(double s_plaus, double s_cons, double s_util, double s_risk,
                              double lambda_budget, const ScoreWeights& w = {}) {
    return w.plausibility * s_plaus + w.consistency * s_cons + w.utility * s_util -
           w.risk * s_risk - lambda_budget;
}

// --- EDCR pre-filter -------------------------------------------------------

// Patch only systematic faults: empirical class error rate among the
// operator's attempts must reach 1 - P_alpha. Zero observations reject.
inline bool edcr_prefilter(const ExperiencePool& pool, const std::string& error_class,
                           const std::string& op_name, double p_alpha = 0.25) {
    size_t attempts = pool.attempts(op_name);
    if (attempts == 0) return false;
    double rate = static_cast<double>(pool.failures(error_class, op_name)) /
                  static_cast<double>(attempts);
    return rate >= 1.0 - p_alpha;
}

// --- plausibility ----------------------------------------------------------

namespace detail {

inline bool evidence_mentions(const ErrorRecord& err, const std::string& needle) {
    std::string n = lower_copy(needle);
    if (n.empty()) return false;
    if (lower_copy(err.message).find(n) != std::string::npos) return true;
    for (const auto& [k, v] : err.evidence)
        if (lower_copy(v).find(n) != std::string::npos) return true;
    return false;
}

inline PatchType class_affinity(const std::string& error_class) {
    std::string c = lower_copy(error_class);
    if (c.find("schema") != std::string::npos || c.find("api") != std::string::npos)
        return PatchType::UPDATE_TOOL_SCHEMA;
    if (c.find("timeout") != std::string::npos) return PatchType::REFINE_EFFECT;
    return PatchType::ADD_PRECONDITION;
}

}  // namespace detail

// Surrogate for calibrated log-probability differences: a fixed structural
// rubric mapped through the sigmoid. Zero rubric logit lands exactly on 0.5.
inline double score_plausibility(const Patch& patch, const FailureTrace& trace,
                                 const PlausibilityRubric& rubric = {}) {
    std::string payload = patch.edit_type == PatchType::UPDATE_TOOL_SCHEMA
                              ? patch.schema_delta.field
                              : patch.predicate.name;
    double logit = rubric.bias;
    if (detail::evidence_mentions(trace.error, payload)) logit += rubric.w_mention;
    if (patch.scope == trace.failed_operator) logit += rubric.w_scope;
    if (detail::class_affinity(trace.error.error_class) == patch.edit_type)
        logit += rubric.w_affinity;
    return sigmoid(logit);
}

// --- consistency -----------------------------------------------------------

// 1 iff the patched operator type-checks and its preconditions are jointly
// satisfiable with the state and the domain invariants. CapacityError
// propagates: an oversized universe never silently passes.
inline int score_consistency(const Patch& patch, const Operator& op,
                             const SymbolicState& state, const Ontology& onto) {
    Operator patched;
    try {
        patched = apply_patch(op, patch);
        for (const auto& p : patched.pre) onto.check_arity(p);
        for (const auto& p : patched.eff) onto.check_arity(p);
    } catch (const CapacityError&) {
        throw;
    } catch (const std::exception&) {
        return 0;  // structural or type failure
    }
    return preconditions_satisfiable(patched, patched.pre, state, onto) ? 1 : 0;
}

// --- utility ---------------------------------------------------------------

enum class ReplayOutcome { PREVENT, MITIGATE, NONE };

// Counterfactual replay of one historical failing call against the patched
// operator; supplied by the environment layer.
using ReplayFn = std::function<ReplayOutcome(const FailureTrace&, const Operator&)>;

struct UtilityResult {
    double score = 0.0;
    size_t k_retrieved = 0;
    size_t n_prevent = 0;
    size_t n_mitigate = 0;
    bool cold_start = false;
};

inline UtilityResult score_utility(const Patch& patch, const FailureTrace& trace,
                                   const ExperiencePool& pool, const Operator& op,
                                   const ReplayFn& replay, size_t k = 20) {
    UtilityResult r;
    auto traces = pool.retrieve(trace.error.error_class, patch.scope, k);
    r.k_retrieved = traces.size();
    r.cold_start = r.k_retrieved < 3;
    if (traces.empty()) return r;
    Operator patched = apply_patch(op, patch);
    for (const FailureTrace* t : traces) {
        switch (replay(*t, patched)) {
            case ReplayOutcome::PREVENT: ++r.n_prevent; break;
            case ReplayOutcome::MITIGATE: ++r.n_mitigate; break;
            case ReplayOutcome::NONE: break;
        }
    }
    r.score = (static_cast<double>(r.n_prevent) + 0.5 * static_cast<double>(r.n_mitigate)) /
              static_cast<double>(r.k_retrieved);
    return r;
}

// --- risk ------------------------------------------------------------------

struct RiskComponents {
    double q_val = 0.0;  // value-rule overlap fraction
    double blast = 0.0;  // affected operators / rule pool size
};

inline double score_risk(double q_val, double blast) { return 0.8 * q_val + 0.2 * blast; }

inline RiskComponents risk_components(const Patch& patch, const ValueGraph& kg_val,
                                      const ProcessKnowledgeGraph& pkg) {
    RiskComponents rc;
    std::string payload = patch.edit_type == PatchType::UPDATE_TOOL_SCHEMA
                              ? patch.schema_delta.field
                              : patch.predicate.name;
    if (!kg_val.empty()) {
        size_t overlap = 0;
        for (const auto& rule : kg_val) {
            bool hits = rule.action == patch.scope;
            for (const auto& c : rule.condition)
                if (c.name == payload) hits = true;
            if (hits) ++overlap;
        }
        rc.q_val = static_cast<double>(overlap) / static_cast<double>(kg_val.size());
    }
    size_t affected = 0;
    for (const auto& [name, op] : pkg.operators()) {
        bool touched = name == patch.scope;
        if (patch.edit_type == PatchType::UPDATE_TOOL_SCHEMA) {
            if (op.tool_schema.field(payload)) touched = true;
        } else {
            for (const auto& p : op.pre)
                if (p.name == payload) touched = true;
            for (const auto& p : op.eff)
                if (p.name == payload) touched = true;
        }
        if (touched) ++affected;
    }
    if (!pkg.operators().empty())
        rc.blast = static_cast<double>(affected) / static_cast<double>(pkg.operators().size());
    return rc;
}

// --- full breakdown --------------------------------------------------------

inline ScoreBreakdown score(const Patch& patch, const FailureTrace& trace,
                            const ExperiencePool& pool, const ValueGraph& kg_val,
                            const ProcessKnowledgeGraph& pkg, const SymbolicState& state,
                            const Ontology& onto, const ReplayFn& replay,
                            const ScoringConfig& cfg, double episode_fdka_seconds = 0.0) {
    const Operator& op = pkg.op(patch.scope);
    ScoreBreakdown b;
    b.s_plaus = score_plausibility(patch, trace, cfg.rubric);
    b.s_cons = static_cast<double>(score_consistency(patch, op, state, onto));
    UtilityResult u = score_utility(patch, trace, pool, op, replay, cfg.k_retrieve);
    b.s_util = u.score;
    b.cold_start = u.cold_start;
    b.k_retrieved = u.k_retrieved;
    b.n_prevent = u.n_prevent;
    b.n_mitigate = u.n_mitigate;
    RiskComponents rc = risk_components(patch, kg_val, pkg);
    b.s_risk = score_risk(rc.q_val, rc.blast);
    b.lambda_budget = episode_fdka_seconds > cfg.b_regulate ? cfg.lambda_penalty : 0.0;
    b.aggregate = aggregate_score(b.s_plaus, b.s_cons, b.s_util, b.s_risk, b.lambda_budget,
                                  cfg.weights);
    return b;
}

}  // namespace opmend

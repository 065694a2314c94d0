#pragma once
// Deterministic simulated environments with scripted failure injection.
// Failure rules are declarative in the scenario file; persistent rules keep
// firing on matching calls until the operator satisfies the injected
// requirement, so cumulative-failure curves reproduce exactly.

#include "opmend/canary.hpp"
#include "opmend/json_codec.hpp"
#include "opmend/knowledge_graphs.hpp"
#include "opmend/planner.hpp"
#include "opmend/proposer.hpp"
#include "opmend/scoring.hpp"

#include <fstream>

namespace opmend {

struct ScenarioLoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& failure_classes() {
    static const std::vector<std::string> classes{
        "policy_flip",   "tool_schema_drift", "auth_schema_drift", "transient_503",
        "ood_entity",    "field_validation",  "timeout"};
    return classes;
}

struct FailureRule {
    std::string op_name;
    std::vector<size_t> task_indices;  // empty = every task
    std::string task_class;            // empty = any class
    std::string failure_class;         // one of failure_classes()
    std::string error_class;           // surfaced error identifier
    std::string message;
    std::map<std::string, std::string> evidence;
    bool persistent = true;            // persistent-until-patched vs transient
    size_t max_fires = 1;              // transient: attempts that fail per task/step
    std::vector<Predicate> fire_if;    // templates over operator params

    enum class Requirement { NONE, SCHEMA_VERSION, SCHEMA_FIELD, PRECONDITION, EFFECT };
    Requirement requirement = Requirement::NONE;
    std::string req_value;
    Predicate req_predicate;  // args "_" are wildcards
};

struct StateInjection {
    size_t at_task = 0;
    std::vector<Predicate> add;
    std::vector<Predicate> remove;
};

struct NoiseConfig {
    double transient_rate = 0.0;
    std::string transient_error_class = "HTTP-503";
    // Mid-run policy flip at a seed-derived task inside [window_lo, window_hi].
    bool has_policy_flip = false;
    size_t window_lo = 0;
    size_t window_hi = 0;
    std::vector<Predicate> policy_flip_add;
};

struct StressMeta {
    std::string target_error_class;
    std::string target_operator;
    long holdout_start = -1;  // < 0: no holdout split
};

struct Scenario {
    std::string name;
    uint64_t seed = 42;
    std::string difficulty;
    Ontology ontology;
    ProcessKnowledgeGraph base_pkg;
    ValueGraph value_rules;
    CausalGraph causal_graph;
    std::vector<Predicate> initial_facts;
    std::vector<Instruction> tasks;
    std::vector<FailureRule> schedule;
    std::vector<StateInjection> injections;
    NoiseConfig noise;
    StressMeta stress;
    std::vector<FailureTrace> preload_traces;
    std::map<std::string, size_t> preload_attempts;
    std::map<std::string, std::vector<FailureTrace>> canary_cases;
    std::vector<MockProposer::Rule> proposer_rules;
};

struct ExecutionResult {
    enum class Status { SUCCESS, FAILURE } status = Status::SUCCESS;
    SymbolicState new_state;
    ErrorRecord error;
    std::string tool_log;

    bool ok() const { return status == Status::SUCCESS; }
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_string(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline double unit_draw(uint64_t a, uint64_t b, uint64_t c) {
    uint64_t h = splitmix64(a ^ splitmix64(b ^ splitmix64(c)));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

// Does the operator carry a predicate matching the requirement template?
// Template args "_" match anything; other constants must match exactly.
inline bool predicate_matches(const Predicate& tmpl, const Predicate& p) {
    if (tmpl.name != p.name || tmpl.negated != p.negated) return false;
    if (tmpl.args.empty()) return true;  // name-only matcher
    if (tmpl.args.size() != p.args.size()) return false;
    for (size_t i = 0; i < tmpl.args.size(); ++i) {
        if (tmpl.args[i].name == "_" || tmpl.args[i].is_variable) continue;
        if (tmpl.args[i].name != p.args[i].name) return false;
    }
    return true;
}

}  // namespace detail

inline bool requirement_met(const FailureRule& rule, const Operator& op) {
    switch (rule.requirement) {
        case FailureRule::Requirement::NONE: return false;
        case FailureRule::Requirement::SCHEMA_VERSION:
            return op.tool_schema.version == rule.req_value;
        case FailureRule::Requirement::SCHEMA_FIELD:
            return op.tool_schema.field(rule.req_value) != nullptr;
        case FailureRule::Requirement::PRECONDITION:
            return std::any_of(op.pre.begin(), op.pre.end(), [&](const Predicate& p) {
                return detail::predicate_matches(rule.req_predicate, p);
            });
        case FailureRule::Requirement::EFFECT:
            return std::any_of(op.eff.begin(), op.eff.end(), [&](const Predicate& p) {
                return detail::predicate_matches(rule.req_predicate, p);
            });
    }
    return false;
}

// One environment instance per run; attempt counters live here so transient
// rules and retry interplay deterministically.
class Environment {
public:
    Environment(const Scenario& scenario, uint64_t run_seed)
        : scenario_(scenario), run_seed_(run_seed) {
        if (scenario.noise.has_policy_flip) {
            uint64_t span = scenario.noise.window_hi - scenario.noise.window_lo + 1;
            uint64_t pick = detail::splitmix64(run_seed ^ scenario.seed * 0x9e37ull) % span;
            policy_flip_task_ = scenario.noise.window_lo + pick;
        }
    }

    // Episode state for a task: initial facts plus every injection (and the
    // seeded policy flip) due at or before it. Task effects never leak across
    // episodes.
    SymbolicState episode_state(size_t task_index) const {
        SymbolicState s;
        for (const auto& f : scenario_.initial_facts) s.add(f);
        for (const auto& inj : scenario_.injections) {
            if (inj.at_task > task_index) continue;
            for (const auto& f : inj.add) s.add(f);
            for (const auto& f : inj.remove) s.remove(f);
        }
        if (policy_flip_task_ && task_index >= *policy_flip_task_)
            for (const auto& f : scenario_.noise.policy_flip_add) s.add(f);
        return s;
    }

    ExecutionResult execute(const PlanStep& step, const SymbolicState& state,
                            const ProcessKnowledgeGraph& pkg, size_t task_index) {
        size_t attempt = ++attempts_[attempt_key(task_index, step)];
        return execute_impl(step, state, pkg.op(step.op_name), task_index, attempt,
                            /*noise=*/true);
    }

    // Replay of a historical failing call against a patched operator, against
    // a copy of the recorded state. Never touches live state or counters.
    SandboxOutcome sandbox(const FailureTrace& trace, const Operator& patched) const {
        if (trace.failed_operator != patched.name)
            return SandboxOutcome::FAIL;  // pass-through: pool traces are failures
        ExecutionResult r = execute_impl(trace.failed_step, trace.state_at_failure, patched,
                                         trace.task_index, 1, /*noise=*/false);
        if (r.ok()) return SandboxOutcome::PASS;
        if (averted_by_precondition(r, trace)) {
            if (steering_binding_exists(trace, patched)) return SandboxOutcome::PASS;
            return SandboxOutcome::MITIGATED;
        }
        return SandboxOutcome::FAIL;
    }

    // Counterfactual replay for utility scoring: prevent when the failing call
    // now succeeds or the new precondition blocks it; mitigate when a
    // rebinding repair path exists.
    ReplayOutcome counterfactual(const FailureTrace& trace, const Operator& patched) const {
        if (trace.failed_operator != patched.name) return ReplayOutcome::NONE;
        ExecutionResult r = execute_impl(trace.failed_step, trace.state_at_failure, patched,
                                         trace.task_index, 1, /*noise=*/false);
        if (r.ok()) return ReplayOutcome::PREVENT;
        if (averted_by_precondition(r, trace)) return ReplayOutcome::PREVENT;
        if (steering_binding_exists(trace, patched)) return ReplayOutcome::MITIGATE;
        return ReplayOutcome::NONE;
    }

    // Canary evidence: scenario-shipped cases for the operator when present,
    // otherwise traces retrieved from the pool by (error class, operator).
    std::vector<const FailureTrace*> canary_cases(const std::string& op_name,
                                                  const std::string& error_class,
                                                  const ExperiencePool& pool,
                                                  size_t cap = 8) const {
        std::vector<const FailureTrace*> out;
        if (auto it = scenario_.canary_cases.find(op_name);
            it != scenario_.canary_cases.end()) {
            for (const auto& t : it->second) {
                if (out.size() == cap) break;
                out.push_back(&t);
            }
            return out;
        }
        return pool.retrieve(error_class, op_name, cap);
    }

    std::optional<size_t> policy_flip_task() const { return policy_flip_task_; }

private:
    static std::string attempt_key(size_t task_index, const PlanStep& step) {
        return std::to_string(task_index) + "|" + step.str();
    }

    ExecutionResult execute_impl(const PlanStep& step, const SymbolicState& state,
                                 const Operator& op, size_t task_index, size_t attempt,
                                 bool noise) const {
        ExecutionResult out;
        std::string call = step.str() + " schema=" + op.tool_schema.version;
        Binding binding = step.binding(op);
        const std::string& task_class =
            task_index < scenario_.tasks.size() ? scenario_.tasks[task_index].task_class
                                                : std::string{};

        for (const auto& rule : scenario_.schedule) {
            if (rule.op_name != step.op_name) continue;
            if (!rule.task_indices.empty() &&
                std::find(rule.task_indices.begin(), rule.task_indices.end(), task_index) ==
                    rule.task_indices.end())
                continue;
            if (!rule.task_class.empty() && rule.task_class != task_class) continue;
            if (rule.persistent && requirement_met(rule, op)) continue;
            if (!rule.fire_if.empty()) {
                bool fires = std::all_of(
                    rule.fire_if.begin(), rule.fire_if.end(), [&](const Predicate& t) {
                        Predicate g = substitute(t, binding);
                        return g.ground() && state.holds(g);
                    });
                if (!fires) continue;
            }
            if (!rule.persistent && attempt > rule.max_fires) continue;
            out.status = ExecutionResult::Status::FAILURE;
            out.error.error_class = rule.error_class;
            out.error.message = rule.message;
            out.error.evidence = rule.evidence;
            out.tool_log = call + " -> " + rule.error_class;
            out.error.evidence["tool_log"] = out.tool_log;
            out.new_state = state;
            return out;
        }

        if (noise && scenario_.noise.transient_rate > 0.0 && attempt == 1) {
            double draw = detail::unit_draw(run_seed_ ^ scenario_.seed, task_index,
                                            detail::hash_string(step.str()));
            if (draw < scenario_.noise.transient_rate) {
                out.status = ExecutionResult::Status::FAILURE;
                out.error.error_class = scenario_.noise.transient_error_class;
                out.error.message = "transient upstream failure";
                out.tool_log = call + " -> " + out.error.error_class;
                out.error.evidence["tool_log"] = out.tool_log;
                out.new_state = state;
                return out;
            }
        }

        for (const auto& p : grounded_pre(op, step)) {
            if (p.ground() && state.holds(p)) continue;
            out.status = ExecutionResult::Status::FAILURE;
            out.error.error_class = "PRECONDITION-UNSATISFIED";
            out.error.message = "precondition not satisfied: " + p.str();
            out.error.evidence["predicate"] = p.str();
            out.tool_log = call + " -> PRECONDITION-UNSATISFIED";
            out.error.evidence["tool_log"] = out.tool_log;
            out.new_state = state;
            return out;
        }

        out.status = ExecutionResult::Status::SUCCESS;
        out.new_state = apply_effects(state, op, step);
        out.tool_log = call + " -> ok";
        return out;
    }

    bool averted_by_precondition(const ExecutionResult& r, const FailureTrace& trace) const {
        return r.error.error_class == "PRECONDITION-UNSATISFIED" &&
               trace.error.error_class != "PRECONDITION-UNSATISFIED";
    }

    // Does some rebinding of the originally-variable slots satisfy the patched
    // preconditions and execute cleanly in the trace state?
    bool steering_binding_exists(const FailureTrace& trace, const Operator& patched) const {
        const PlanStep& failed = trace.failed_step;
        for (size_t i = 0; i < failed.args.size(); ++i) {
            if (i >= failed.arg_vars.size() || failed.arg_vars[i].empty()) continue;
            const std::string& type =
                i < patched.params.size() ? patched.params[i].type : "";
            for (const auto& entity : scenario_.ontology.entities_of_type(type)) {
                if (!failed.args[i].is_variable && failed.args[i].name == entity) continue;
                PlanStep alt = failed;
                alt.args[i] = Term::constant(entity);
                ExecutionResult r = execute_impl(alt, trace.state_at_failure, patched,
                                                 trace.task_index, 1, /*noise=*/false);
                if (r.ok()) return true;
            }
        }
        return false;
    }

    const Scenario& scenario_;
    uint64_t run_seed_;
    mutable std::map<std::string, size_t> attempts_;
    std::optional<size_t> policy_flip_task_;
};

}  // namespace opmend

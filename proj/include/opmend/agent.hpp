#pragma once
// The agent engine: per-task control loop (signals, arbitration, verify,
// execute, adapt) and the FDKA pipeline from failure trace to committed
// patch. Baseline modes strip the adaptation machinery down to retry loops,
// reflection memory, verification only, or nothing at all.

#include "opmend/controller.hpp"
#include "opmend/envsim.hpp"
#include "opmend/guardrails.hpp"
#include "opmend/ledger.hpp"
#include "opmend/localize.hpp"
#include "opmend/scenario_io.hpp"
#include "opmend/verifier.hpp"

#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>

namespace opmend {

enum class BaselineMode { FULL, STATIC_NS, VERIFY_ONLY, RETRY, REFLECT_MEMORY };

inline const char* to_string(BaselineMode m) {
    switch (m) {
        case BaselineMode::FULL: return "full";
        case BaselineMode::STATIC_NS: return "static-ns";
        case BaselineMode::VERIFY_ONLY: return "verify-only";
        case BaselineMode::RETRY: return "retry";
        case BaselineMode::REFLECT_MEMORY: return "reflect";
    }
    return "?";
}

enum class ProposerKind { MOCK, REMOTE };

struct FdkaCosts {
    double propose = 0.3;  // simulated seconds per stage
    double score = 0.1;
    double canary_per_case = 0.1;
};

struct AgentConfig {
    std::string name = "full";
    BaselineMode mode = BaselineMode::FULL;
    bool fdka = true;
    bool verify = true;
    bool arbitration = true;
    bool guardrails_value = true;
    bool guardrails_causal = true;
    bool canary = true;
    bool rollback = true;
    bool ledger = true;
    ProposerKind proposer = ProposerKind::MOCK;
    ControllerConfig controller;
    ScoringConfig scoring;
    GateConfig gate;
    LocalizeWeights localize_weights;
    FdkaCosts fdka_costs;
    size_t verify_horizon = 3;
    size_t retry_limit = 2;
    size_t reflect_capacity = 20;
    double temperature = 0.3;
    std::string remote_host = "127.0.0.1";
    int remote_port = 0;

    void validate() const { controller.validate(); }

    // Named presets matching the benchmark configurations. "-governance"
    // drops only the value/causal gates (canary and rollback stay), while
    // "governance-off" is the stress variant with all five governance flags
    // down.
    static AgentConfig preset(const std::string& name) {
        AgentConfig c;
        c.name = name;
        if (name == "full") return c;
        if (name == "-governance") {
            c.guardrails_value = false;
            c.guardrails_causal = false;
            return c;
        }
        if (name == "governance-off") {
            c.guardrails_value = false;
            c.guardrails_causal = false;
            c.canary = false;
            c.rollback = false;
            c.ledger = false;
            return c;
        }
        if (name == "-fdka") {
            c.fdka = false;
            return c;
        }
        if (name == "-verify") {
            c.verify = false;
            return c;
        }
        if (name == "-arbitration") {
            c.arbitration = false;
            return c;
        }
        if (name == "static-ns") {
            c.mode = BaselineMode::STATIC_NS;
            c.fdka = c.verify = c.arbitration = false;
            return c;
        }
        if (name == "verify-only") {
            c.mode = BaselineMode::VERIFY_ONLY;
            c.fdka = false;
            return c;
        }
        if (name == "retry") {
            c.mode = BaselineMode::RETRY;
            c.fdka = c.verify = c.arbitration = false;
            return c;
        }
        if (name == "reflect") {
            c.mode = BaselineMode::REFLECT_MEMORY;
            c.fdka = c.verify = c.arbitration = false;
            return c;
        }
        throw ContractViolation("unknown agent config preset '" + name + "'");
    }
};

struct CommitRecord {
    std::string key;
    std::string error_class;
    std::string op_name;
    std::string edit_type;
    double csr = -1.0;  // negative when canary was skipped
};

struct TaskFailure {
    std::string error_class;
    std::string op_name;
    bool terminal = false;
};

struct TaskRecord {
    std::string task_id;
    size_t index = 0;
    bool success = false;
    std::string terminal_reason;  // empty on success
    size_t s1 = 0, s2 = 0, verify = 0;
    size_t repairs = 0;
    std::vector<TaskFailure> failures;
    size_t patches_proposed = 0;
    size_t patches_escalated = 0;
    size_t patches_queued = 0;
    size_t patches_rejected = 0;
    size_t value_vetoes = 0;
    std::vector<CommitRecord> commits;
    size_t rollbacks = 0;
    double budget_spent = 0.0;
    double fdka_seconds = 0.0;
    double final_u = 0.0;
    double final_p_viol = 0.0;
};

// A reflection note: avoid this binding for this operator (FIFO-capped).
struct ReflectNote {
    std::string op_name;
    std::vector<Term> args;
};

class Engine {
public:
    Engine(const Scenario& scenario, AgentConfig cfg, uint64_t run_seed,
           std::string ledger_path = "", Proposer* proposer_override = nullptr)
        : scenario_(scenario), cfg_(std::move(cfg)), run_seed_(run_seed),
          pkg_(scenario.base_pkg), env_(scenario, run_seed),
          ledger_(cfg_.gate), reflector_(cfg_.controller.reflect_window),
          external_proposer_(proposer_override) {
        cfg_.validate();
        if (!external_proposer_) {
            if (cfg_.proposer == ProposerKind::REMOTE)
                throw ContractViolation(
                    "remote proposer requires an injected client (see remote_proposer.hpp)");
            mock_ = std::make_unique<MockProposer>(
                MockProposer{std::vector<MockProposer::Rule>(scenario.proposer_rules)});
        }
        for (const auto& [op, n] : scenario.preload_attempts) pool_.record_attempts(op, n);
        for (const auto& t : scenario.preload_traces) pool_.record_failure(t);
        if (!ledger_path.empty()) ledger_.open(ledger_path);
    }

    // Optional line-oriented event sink; every emitted line is deterministic,
    // so a full episode can be frozen and compared as a golden trace.
    void set_trace_sink(std::function<void(const std::string&)> sink) {
        sink_ = std::move(sink);
    }

    const ProcessKnowledgeGraph& pkg() const { return pkg_; }
    ProcessKnowledgeGraph& pkg_mut() { return pkg_; }
    const GovernanceLedger& ledger() const { return ledger_; }
    GovernanceLedger& ledger_mut() { return ledger_; }
    const ExperiencePool& pool() const { return pool_; }
    const ControllerConfig& controller() const { return cfg_.controller; }
    Verifier& verifier() { return verifier_; }
    Environment& env() { return env_; }

    std::vector<TaskRecord> run_all() {
        std::vector<TaskRecord> out;
        out.reserve(scenario_.tasks.size());
        for (size_t i = 0; i < scenario_.tasks.size(); ++i) out.push_back(run_task(i));
        return out;
    }

    TaskRecord run_task(size_t index) {
        const Instruction& instr = scenario_.tasks[index];
        TaskRecord rec;
        rec.task_id = instr.id;
        rec.index = index;
        ledger_.tick_task();
        episode_fdka_seconds_ = 0.0;

        SymbolicState state = env_.episode_state(index);
        Plan plan;
        try {
            plan = planner_.ground(planner_.compile_cached(instr, pkg_), state, pkg_,
                                   scenario_.ontology);
        } catch (const PlanError&) {
            rec.terminal_reason = "plan_error";
            finish(rec, index, Pathway::S1, 0.0, 0.0);
            return rec;
        }
        apply_reflect_notes(plan, state);

        double budget = cfg_.controller.budget;
        size_t cursor = 0;
        size_t step_retries = 0;
        double u = 0.0, p_viol = 0.0;

        while (cursor < plan.steps.size() && budget > 0) {
            Plan remaining = tail(plan, cursor);
            u = uncertainty(remaining);
            SignalFeatures feats = features(remaining, state, budget, index);
            p_viol = violation_prob(feats, cfg_.controller);
            Pathway pathway = cfg_.arbitration
                                  ? arbitrate(u, p_viol, budget, cfg_.controller)
                                  : Pathway::S1;
            if (pathway == Pathway::VERIFY && !cfg_.verify) pathway = Pathway::S1;
            count(rec, pathway);

            if (pathway == Pathway::VERIFY) {
                Verdict v = verifier_.verify(remaining, state, pkg_, scenario_.ontology,
                                             cfg_.verify_horizon, &pool_);
                emit(std::string("verify:") + to_string(v.tag));
                budget -= cfg_.controller.c_verify;
                rec.budget_spent += cfg_.controller.c_verify;
                if (v.tag == VerdictTag::BLOCK) {
                    try {
                        plan = planner_.replan(instr, pkg_, state, scenario_.ontology);
                        apply_reflect_notes(plan, state);
                        cursor = 0;
                        step_retries = 0;
                        continue;
                    } catch (const PlanError&) {
                        rec.terminal_reason = "blocked_no_replan";
                        break;
                    }
                }
                if (v.tag == VerdictTag::REPAIR && v.repair) {
                    for (const auto& sw : v.repair->swaps) {
                        size_t abs_index = cursor + sw.index;
                        RepairEvent ev{plan.steps[abs_index].op_name,
                                       plan.steps[abs_index].binding(
                                           pkg_.op(plan.steps[abs_index].op_name)),
                                       sw.replacement.binding(pkg_.op(sw.replacement.op_name))};
                        pool_.record_repair(std::move(ev));
                        plan.steps[abs_index] = sw.replacement;
                    }
                    ++rec.repairs;
                }
            } else if (pathway == Pathway::S2) {
                try {
                    plan = planner_.deliberative(instr, pkg_, state, scenario_.ontology);
                    apply_reflect_notes(plan, state);
                    cursor = 0;
                    step_retries = 0;
                } catch (const PlanError&) {
                    rec.terminal_reason = "plan_error";
                    break;
                }
                budget -= cfg_.controller.c_s2;
                rec.budget_spent += cfg_.controller.c_s2;
            }

            const PlanStep& head = plan.steps[cursor];
            pool_.record_attempt(head.op_name);
            ExecutionResult result = env_.execute(head, state, pkg_, index);
            note_execution(result.ok());
            emit("execute:" + head.op_name +
                 (result.ok() ? ":success" : ":failure:" + result.error.error_class));

            if (!result.ok()) {
                rec.failures.push_back({result.error.error_class, head.op_name, false});
                FailureTrace trace = make_trace(plan, cursor, state, result, index, instr.id);
                pool_.record_failure(trace);
                touch_trust(head.op_name, /*success=*/false, rec);

                bool handled = false;
                if (cfg_.mode == BaselineMode::RETRY ||
                    cfg_.mode == BaselineMode::REFLECT_MEMORY) {
                    if (cfg_.mode == BaselineMode::REFLECT_MEMORY) remember_note(head);
                    if (step_retries < cfg_.retry_limit) {
                        ++step_retries;
                        if (cfg_.mode == BaselineMode::REFLECT_MEMORY)
                            rebind_step(plan.steps[cursor], state);
                        handled = true;  // re-execute the same step
                    }
                } else if (cfg_.fdka) {
                    fdka_time_charge_ = 0.0;
                    std::optional<Patch> committed = run_fdka(trace, index, rec);
                    rec.fdka_seconds += fdka_time_charge_;
                    episode_fdka_seconds_ += fdka_time_charge_;
                    if (committed) {
                        try {
                            plan = planner_.replan(instr, pkg_, state, scenario_.ontology);
                            apply_reflect_notes(plan, state);
                            emit("replan:ok");
                            cursor = 0;
                            step_retries = 0;
                            handled = true;
                        } catch (const PlanError&) {
                            emit("replan:failed");
                            rec.terminal_reason = "replan_failed";
                        }
                    }
                }
                if (!handled) {
                    if (rec.terminal_reason.empty()) {
                        if (cfg_.mode == BaselineMode::RETRY ||
                            cfg_.mode == BaselineMode::REFLECT_MEMORY)
                            rec.terminal_reason = "retries_exhausted";
                        else
                            rec.terminal_reason = cfg_.fdka ? "fdka_null" : "no_adaptation";
                    }
                    rec.failures.back().terminal = true;
                    break;
                }
            } else {
                state = result.new_state;
                touch_trust(head.op_name, /*success=*/true, rec);
                maybe_auto_rollback(head.op_name, rec);
                ++cursor;
                step_retries = 0;
            }
            budget -= cfg_.controller.c_s1;
            rec.budget_spent += cfg_.controller.c_s1;
        }

        bool steps_done = cursor >= plan.steps.size();
        bool goal_ok = instr.goal.empty() || entails(state, instr.goal);
        rec.success = steps_done && goal_ok && rec.terminal_reason.empty();
        if (!rec.success && rec.terminal_reason.empty())
            rec.terminal_reason = steps_done ? "goal_unmet" : "budget_exhausted";
        finish(rec, index, dominant(rec), u, p_viol);
        return rec;
    }

    // Table 9 counterfactual: approve an escalated entry and push it through
    // canary and commit.
    bool resume_approved(const std::string& key, TaskRecord& rec) {
        LedgerEntry& e = ledger_.approve(key);
        const Patch& patch = e.patch;
        Operator preview = apply_patch(pkg_.op(patch.scope), patch);
        auto cases = env_.canary_cases(patch.scope, e.provenance.context, pool_);
        if (cases.empty())
            cases = pool_.retrieve(e.provenance.context, patch.scope, 8);
        CanaryReport rep = run_canary(
            preview, cases,
            [this](const FailureTrace& t, const Operator& o) { return env_.sandbox(t, o); });
        ledger_.attach_canary(key, rep);
        if (!rep.passed) {
            ledger_.unstage(key, "canary_failed");
            return false;
        }
        ledger_.commit(key, pkg_);
        rec.commits.push_back({key, e.provenance.context, patch.scope,
                               to_string(patch.edit_type), rep.csr});
        op_commit_keys_[patch.scope] = key;
        return true;
    }

    // The FDKA pipeline: localize -> EDCR -> propose -> score -> guardrails ->
    // CheckAndStage -> human gate -> canary -> commit; every early exit
    // returns null.
    std::optional<Patch> run_fdka(const FailureTrace& trace, size_t task_index,
                                  TaskRecord& rec) {
        std::vector<ResponsibilityScore> ranking;
        try {
            ranking = localize(trace, pkg_, cfg_.localize_weights);
        } catch (const LocalizeError&) {
            return std::nullopt;
        }
        const std::string& target = ranking.front().op_name;
        emit("localize:" + target);
        if (!pkg_.has_operator(target)) return std::nullopt;

        if (!edcr_prefilter(pool_, trace.error.error_class, target, cfg_.scoring.p_alpha)) {
            emit("edcr:reject");
            return std::nullopt;
        }

        const Operator& op = pkg_.op(target);
        std::optional<Patch> patch;
        try {
            patch = propose(trace, op, proposer(), scenario_.ontology, cfg_.temperature);
        } catch (const ProposerTransportError&) {
            try {  // one retry for transport hiccups
                patch = propose(trace, op, proposer(), scenario_.ontology, cfg_.temperature);
            } catch (const ProposerTransportError&) {
                return std::nullopt;
            }
        }
        fdka_time_charge_ += cfg_.fdka_costs.propose;
        if (!patch) {
            emit("propose:rejected");
            return std::nullopt;
        }
        ++rec.patches_proposed;
        emit(std::string("propose:") + to_string(patch->edit_type) + ":" +
             (patch->edit_type == PatchType::UPDATE_TOOL_SCHEMA ? patch->schema_delta.field
                                                                : patch->predicate.str()));

        ScoreBreakdown breakdown = score(
            *patch, trace, pool_, scenario_.value_rules, pkg_, trace.state_at_failure,
            scenario_.ontology,
            [this](const FailureTrace& t, const Operator& o) {
                return env_.counterfactual(t, o);
            },
            cfg_.scoring, episode_fdka_seconds_);
        fdka_time_charge_ += cfg_.fdka_costs.score;

        double theta = cfg_.scoring.theta;
        if (breakdown.cold_start) theta *= cfg_.scoring.cold_start_relax;
        emit("score:consistency=" + fmt(breakdown.s_cons) + ":utility=" +
             fmt(breakdown.s_util));
        if (breakdown.aggregate < theta) {
            emit("score:below_threshold");
            ++rec.patches_rejected;
            return std::nullopt;
        }

        if (cfg_.guardrails_value && value_veto(*patch, scenario_.value_rules)) {
            emit("guardrails:value=veto");
            ++rec.value_vetoes;
            ++rec.patches_rejected;
            return std::nullopt;
        }
        if (cfg_.guardrails_causal) {
            CausalCheck cc = causal_veto(*patch, scenario_.causal_graph);
            if (cc.veto) {
                emit("guardrails:value=allow:causal=veto:iota=" + fmt(cc.identifiability) +
                     ":eta=" + fmt(cc.impact));
                if (cfg_.ledger)
                    ledger_.escalate(*patch, provenance(trace, task_index), "causal_guardrail");
                ++rec.patches_escalated;
                return std::nullopt;
            }
            emit("guardrails:value=allow:causal=allow:iota=" + fmt(cc.identifiability) +
                 ":eta=" + fmt(cc.impact));
        }

        if (!cfg_.ledger) {
            // Governance-off stress configuration: apply directly.
            pkg_.apply(*patch);
            rec.commits.push_back({edit_key(*patch), trace.error.error_class, patch->scope,
                                   to_string(patch->edit_type), -1.0});
            return patch;
        }

        StageResult staged = ledger_.check_and_stage(*patch, provenance(trace, task_index),
                                                     pkg_);
        if (staged == StageResult::REVERSE_ESCALATE_HUMAN) {
            ++rec.patches_escalated;
            return std::nullopt;
        }
        std::string key = edit_key(*patch);

        GateDecision gate = ledger_.gate(breakdown);
        if (gate.tag == GateDecision::Tag::QUEUE_HUMAN) {
            std::string reason;
            for (const auto& r : gate.reasons) reason += (reason.empty() ? "" : "; ") + r;
            ledger_.queue_human(key, reason);
            ++rec.patches_queued;
            return std::nullopt;
        }

        CanaryReport rep;
        if (cfg_.canary) {
            Operator preview = apply_patch(pkg_.op(patch->scope), *patch);
            auto cases =
                env_.canary_cases(patch->scope, trace.error.error_class, pool_);
            rep = run_canary(preview, cases, [this](const FailureTrace& t, const Operator& o) {
                return env_.sandbox(t, o);
            });
            fdka_time_charge_ +=
                cfg_.fdka_costs.canary_per_case * static_cast<double>(rep.n_canary);
            ledger_.attach_canary(key, rep);
            emit("canary:" + std::to_string(rep.n_pass) + "/" + std::to_string(rep.n_canary) +
                 (rep.mode == CanaryMode::STRICT ? ":strict:" : ":low_power:") +
                 (rep.passed ? "pass" : "fail"));
            if (!rep.passed) {
                ledger_.unstage(key, "canary_failed");
                ++rec.patches_rejected;
                return std::nullopt;
            }
        }

        const LedgerEntry& committed_entry = ledger_.commit(key, pkg_);
        emit("commit:rho0=" + fmt(committed_entry.trust.rho()));
        rec.commits.push_back({key, trace.error.error_class, patch->scope,
                               to_string(patch->edit_type), cfg_.canary ? rep.csr : -1.0});
        op_commit_keys_[patch->scope] = key;
        maybe_consolidate(key, rec);
        return patch;
    }

private:
    Proposer& proposer() { return external_proposer_ ? *external_proposer_ : *mock_; }

    void emit(const std::string& line) const {
        if (sink_) sink_(line);
    }

    static std::string fmt(double v) {
        std::ostringstream os;
        os << std::setprecision(6) << v;
        return os.str();
    }

    static Plan tail(const Plan& plan, size_t cursor) {
        Plan t = plan;
        t.steps.assign(plan.steps.begin() + static_cast<long>(cursor), plan.steps.end());
        t.step_pre_unsat.assign(plan.step_pre_unsat.begin() + static_cast<long>(cursor),
                                plan.step_pre_unsat.end());
        return t;
    }

    static void count(TaskRecord& rec, Pathway p) {
        if (p == Pathway::S1)
            ++rec.s1;
        else if (p == Pathway::S2)
            ++rec.s2;
        else
            ++rec.verify;
    }

    static Pathway dominant(const TaskRecord& rec) {
        if (rec.s2 >= rec.verify && rec.s2 >= rec.s1 && rec.s2 > 0) return Pathway::S2;
        if (rec.verify >= rec.s1 && rec.verify > 0) return Pathway::VERIFY;
        return Pathway::S1;
    }

    void finish(TaskRecord& rec, size_t index, Pathway dom, double u, double p_viol) {
        rec.final_u = u;
        rec.final_p_viol = p_viol;
        note_task(rec.success);
        for (const auto& [k, v] : scenario_.tasks[index].slots) seen_entities_.insert(v);
        reflector_.observe({u, p_viol, rec.success, dom});
        reflector_.reflect(cfg_.controller);
    }

    SignalFeatures features(const Plan& remaining, const SymbolicState& state, double budget,
                            size_t task_index) {
        SignalFeatures f;
        size_t horizon = std::min<size_t>(cfg_.verify_horizon, remaining.steps.size());
        size_t pre_total = 0, pre_unsat = 0, with_rules = 0;
        SymbolicState sim = state;  // effects assumed to land, gaps are real gaps
        for (size_t i = 0; i < horizon; ++i) {
            const PlanStep& s = remaining.steps[i];
            const Operator& op = pkg_.op(s.op_name);
            for (const auto& p : grounded_pre(op, s)) {
                ++pre_total;
                if (!p.ground() || !sim.holds(p)) ++pre_unsat;
            }
            sim = apply_effects(sim, op, s);
            // Permitted rules are benign; only deontic obligations/prohibitions
            // raise the stakes of touching a step.
            for (const auto& rule : scenario_.value_rules)
                if (rule.action == s.op_name && rule.modality != Modality::Permitted) {
                    ++with_rules;
                    break;
                }
        }
        f.precondition_gap() = pre_total == 0 ? 0.0
                                              : static_cast<double>(pre_unsat) /
                                                    static_cast<double>(pre_total);
        f.invariant_proximity() = invariant_proximity(state);
        f.tool_failure_rate() = window_rate(recent_exec_failures_);
        f.novelty() = novelty(task_index);
        f.recent_violations() = window_rate(recent_task_failures_);
        f.plan_depth() = std::min(1.0, static_cast<double>(remaining.steps.size()) / 12.0);
        f.budget_pressure() = std::clamp(1.0 - budget / cfg_.controller.budget, 0.0, 1.0);
        f.uncertainty() = uncertainty(remaining);
        f.value_impact() = horizon == 0 ? 0.0
                                        : static_cast<double>(with_rules) /
                                              static_cast<double>(horizon);
        std::set<std::string> distinct;
        for (const auto& s : remaining.steps) distinct.insert(s.op_name);
        f.operator_churn() = remaining.steps.empty()
                                 ? 0.0
                                 : 1.0 - static_cast<double>(distinct.size()) /
                                             static_cast<double>(remaining.steps.size());
        return f;
    }

    // Proximity to the nearest domain invariant: 1 when violated, 0 when far.
    double invariant_proximity(const SymbolicState& state) const {
        if (scenario_.ontology.invariants.empty()) return 0.0;
        size_t best = 5;
        for (const auto& conj : scenario_.ontology.invariants) {
            size_t missing = 0;
            for (const auto& a : conj)
                if (!state.holds(a.positive())) ++missing;
            best = std::min(best, missing);
        }
        return 1.0 - static_cast<double>(std::min<size_t>(best, 5)) / 5.0;
    }

    // Out-of-distribution entities: slot values the ontology has never heard
    // of. Per-task identifiers drawn from the entity table are not novel.
    double novelty(size_t task_index) const {
        const auto& slots = scenario_.tasks[task_index].slots;
        if (slots.empty()) return 0.0;
        size_t unknown = 0;
        for (const auto& [k, v] : slots)
            if (!scenario_.ontology.has_entity(v)) ++unknown;
        return static_cast<double>(unknown) / static_cast<double>(slots.size());
    }

    static double window_rate(const std::deque<bool>& w) {
        if (w.empty()) return 0.0;
        size_t bad = 0;
        for (bool b : w)
            if (b) ++bad;
        return static_cast<double>(bad) / static_cast<double>(w.size());
    }

    void note_execution(bool ok) {
        if (recent_exec_failures_.size() == 10) recent_exec_failures_.pop_front();
        recent_exec_failures_.push_back(!ok);
    }

    void note_task(bool ok) {
        if (recent_task_failures_.size() == 5) recent_task_failures_.pop_front();
        recent_task_failures_.push_back(!ok);
    }

    FailureTrace make_trace(const Plan& plan, size_t cursor, const SymbolicState& state,
                            const ExecutionResult& result, size_t task_index,
                            const std::string& task_id) const {
        FailureTrace t;
        t.actions.assign(plan.steps.begin(), plan.steps.begin() + static_cast<long>(cursor) + 1);
        t.failed_step = plan.steps[cursor];
        t.failed_operator = t.failed_step.op_name;
        t.state_at_failure = state;
        t.states = {state};
        t.error = result.error;
        t.task_index = task_index;
        t.task_id = task_id;
        return t;
    }

    ProvenanceRecord provenance(const FailureTrace& trace, size_t task_index) {
        ProvenanceRecord p;
        p.source = "fdka/propose-edit";
        p.inputs_digest =
            Sha256::hex(serialize_trace(trace, pkg_.op(trace.failed_operator)));
        p.context = trace.error.error_class;
        p.rationale = "repair for " + trace.error.error_class + " on " + trace.failed_operator;
        p.timestamp = "task" + std::to_string(task_index) + ".ev" +
                      std::to_string(ledger_.events().size());
        p.trace_ref = trace.task_id + "#" + std::to_string(trace.task_index);
        return p;
    }

    void touch_trust(const std::string& op_name, bool success, TaskRecord& rec) {
        auto it = op_commit_keys_.find(op_name);
        if (it == op_commit_keys_.end()) return;
        const LedgerEntry* e = ledger_.latest(it->second);
        if (!e || e->status != EntryStatus::COMMITTED) return;
        double rho = ledger_.trust_update(it->second, success);
        verifier_.set_trust(op_name, rho);
        emit("trust:" + op_name + ":rho=" + fmt(rho));
        (void)rec;
    }

    void maybe_auto_rollback(const std::string& op_name, TaskRecord& rec) {
        if (!cfg_.rollback || !cfg_.ledger) return;
        auto it = op_commit_keys_.find(op_name);
        if (it == op_commit_keys_.end()) return;
        if (!ledger_.rollback_flagged_for(it->second)) return;
        ledger_.rollback(it->second, pkg_);
        ++rec.rollbacks;
    }

    void maybe_consolidate(const std::string& key, TaskRecord& rec) {
        if (ledger_.history_size(key) <= cfg_.gate.max_history) return;
        if (!ledger_.consolidate(key, pkg_)) return;  // net zero: key removed
        const LedgerEntry* e = ledger_.latest(key);
        Operator preview = apply_patch(pkg_.op(e->patch.scope), e->patch);
        auto cases = pool_.retrieve(e->provenance.context, e->patch.scope, 8);
        CanaryReport rep = run_canary(
            preview, cases,
            [this](const FailureTrace& t, const Operator& o) { return env_.sandbox(t, o); });
        ledger_.attach_canary(key, rep);
        if (rep.passed) {
            ledger_.commit(key, pkg_);
        } else {
            ledger_.unstage(key, "canary_failed_post_consolidation");
            ++rec.patches_rejected;
        }
    }

    // Reflection memory: avoid bindings that failed before. The grounded plan
    // is post-processed, swapping noted bindings for the next satisfying
    // alternative when one exists.
    void remember_note(const PlanStep& step) {
        for (const auto& n : notes_)
            if (n.op_name == step.op_name && n.args == step.args) return;
        if (notes_.size() == cfg_.reflect_capacity) notes_.pop_front();
        notes_.push_back({step.op_name, step.args});
    }

    bool noted_bad(const PlanStep& step) const {
        return std::any_of(notes_.begin(), notes_.end(), [&](const ReflectNote& n) {
            return n.op_name == step.op_name && n.args == step.args;
        });
    }

    void apply_reflect_notes(Plan& plan, const SymbolicState& state) {
        if (cfg_.mode != BaselineMode::REFLECT_MEMORY || notes_.empty()) return;
        for (auto& step : plan.steps)
            if (noted_bad(step)) rebind_step(step, state);
    }

    void rebind_step(PlanStep& step, const SymbolicState& state) {
        const Operator& op = pkg_.op(step.op_name);
        for (size_t i = 0; i < step.args.size(); ++i) {
            if (i >= step.arg_vars.size() || step.arg_vars[i].empty()) continue;
            const std::string& type = i < op.params.size() ? op.params[i].type : "";
            for (const auto& entity : scenario_.ontology.entities_of_type(type)) {
                if (!step.args[i].is_variable && step.args[i].name == entity) continue;
                PlanStep alt = step;
                alt.args[i] = Term::constant(entity);
                if (noted_bad(alt)) continue;
                bool pre_ok = true;
                for (const auto& p : grounded_pre(op, alt))
                    if (p.ground() && !state.holds(p)) {
                        pre_ok = false;
                        break;
                    }
                if (!pre_ok) continue;
                step = alt;
                return;
            }
        }
    }

    const Scenario& scenario_;
    AgentConfig cfg_;
    uint64_t run_seed_;
    ProcessKnowledgeGraph pkg_;
    Environment env_;
    GovernanceLedger ledger_;
    Planner planner_;
    Verifier verifier_;
    Reflector reflector_;
    ExperiencePool pool_;
    std::unique_ptr<MockProposer> mock_;
    Proposer* external_proposer_ = nullptr;
    std::deque<ReflectNote> notes_;
    std::deque<bool> recent_exec_failures_;
    std::deque<bool> recent_task_failures_;
    std::set<std::string> seen_entities_;
    std::map<std::string, std::string> op_commit_keys_;
    std::function<void(const std::string&)> sink_;
    double episode_fdka_seconds_ = 0.0;
    double fdka_time_charge_ = 0.0;
};

}  // namespace opmend

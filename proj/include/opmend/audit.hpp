#pragma once
// Synthetic governance audit: scripted patches pushed through the scoring,
// guardrail, staging, gate and canary stages, with each decision compared
// against its expected outcome.

#include "opmend/agent.hpp"

namespace opmend {

struct AuditCase {
    std::string label;
    Patch patch;
    FailureTrace trace;
    std::string expected;  // "commit" | "value_veto" | "causal_escalate" | "reject"
};

struct AuditOutcome {
    std::string label;
    std::string expected;
    std::string actual;
    double csr = -1.0;
    bool match() const { return expected == actual; }
};

struct AuditResult {
    std::vector<AuditOutcome> outcomes;
    size_t matches = 0;
    size_t value_vetoes = 0;
    size_t causal_escalations = 0;
    size_t commits = 0;
    size_t safe_expected = 0;
    size_t safe_canary_passes = 0;

    bool all_match() const { return matches == outcomes.size(); }
};

struct AuditSpec {
    Scenario domain;
    std::vector<AuditCase> cases;
};

inline AuditSpec load_audit_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioLoadError("cannot open audit spec '" + path + "'");
    json doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ScenarioLoadError("audit spec is not valid JSON");
    AuditSpec spec;
    spec.domain = scenario_from_json(doc, path);
    for (const auto& c : doc.at("audit_patches")) {
        AuditCase ac;
        ac.label = c.at("label").get<std::string>();
        ac.patch = patch_from_json(c.at("patch"));
        ac.trace = detail::config_trace(c.at("trace"), "audit_patches." + ac.label);
        ac.expected = c.at("expected").get<std::string>();
        spec.cases.push_back(std::move(ac));
    }
    return spec;
}

inline ProvenanceRecord audit_provenance(const AuditCase& c) {
    ProvenanceRecord p;
    p.source = "audit";
    p.inputs_digest = Sha256::hex(c.label);
    p.context = c.trace.error.error_class;
    p.rationale = c.patch.rationale.empty() ? "audit probe" : c.patch.rationale;
    p.timestamp = "audit." + c.label;
    p.trace_ref = c.trace.task_id;
    return p;
}

inline AuditResult run_audit(const AuditSpec& spec, const ScoringConfig& scoring = {},
                             const GateConfig& gate_cfg = {}) {
    AuditResult result;
    const Scenario& sc = spec.domain;
    Environment env(sc, sc.seed);
    ExperiencePool pool;
    for (const auto& [op, n] : sc.preload_attempts) pool.record_attempts(op, n);
    for (const auto& t : sc.preload_traces) pool.record_failure(t);

    for (const auto& c : spec.cases) {
        // Each case gets a fresh PKG and ledger: patches are independent probes.
        ProcessKnowledgeGraph pkg = sc.base_pkg;
        GovernanceLedger ledger(gate_cfg);
        AuditOutcome out;
        out.label = c.label;
        out.expected = c.expected;

        ScoreBreakdown b = score(
            c.patch, c.trace, pool, sc.value_rules, pkg, c.trace.state_at_failure,
            sc.ontology,
            [&](const FailureTrace& t, const Operator& o) { return env.counterfactual(t, o); },
            scoring);

        if (value_veto(c.patch, sc.value_rules)) {
            out.actual = "value_veto";
            ++result.value_vetoes;
        } else if (causal_veto(c.patch, sc.causal_graph).veto) {
            out.actual = "causal_escalate";
            ledger.escalate(c.patch, audit_provenance(c), "causal_guardrail");
            ++result.causal_escalations;
        } else if (b.aggregate < scoring.theta) {
            out.actual = "reject";
        } else {
            ledger.check_and_stage(c.patch, audit_provenance(c), pkg);
            std::string key = edit_key(c.patch);
            if (ledger.gate(b).tag == GateDecision::Tag::QUEUE_HUMAN) {
                ledger.queue_human(key, "audit gate");
                out.actual = "queue_human";
            } else {
                Operator preview = apply_patch(pkg.op(c.patch.scope), c.patch);
                auto cases = env.canary_cases(c.patch.scope, c.trace.error.error_class, pool);
                CanaryReport rep = run_canary(
                    preview, cases,
                    [&](const FailureTrace& t, const Operator& o) { return env.sandbox(t, o); });
                ledger.attach_canary(key, rep);
                out.csr = rep.csr;
                if (rep.passed) {
                    ledger.commit(key, pkg);
                    out.actual = "commit";
                    ++result.commits;
                } else {
                    ledger.unstage(key, "canary_failed");
                    out.actual = "canary_reject";
                }
            }
        }
        if (c.expected == "commit") {
            ++result.safe_expected;
            if (out.actual == "commit") ++result.safe_canary_passes;
        }
        if (out.match()) ++result.matches;
        result.outcomes.push_back(std::move(out));
    }
    return result;
}

}  // namespace opmend

#pragma once
// Conflict-aware governance ledger: staging with coverage/reverse conflict
// detection, the human gate, commit with provenance and rollback sets,
// Beta-Bernoulli trust, consolidation, and an append-only event log whose
// replay reconstructs PKG version and trust state exactly.

#include "opmend/canary.hpp"
#include "opmend/json_codec.hpp"
#include "opmend/pkg.hpp"
#include "opmend/scoring.hpp"

#include <fstream>

namespace opmend {

struct GovernanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EntryStatus { STAGED, COMMITTED, ROLLED_BACK, QUEUED_HUMAN, ESCALATED, DENIED };

inline const char* to_string(EntryStatus s) {
    switch (s) {
        case EntryStatus::STAGED: return "STAGED";
        case EntryStatus::COMMITTED: return "COMMITTED";
        case EntryStatus::ROLLED_BACK: return "ROLLED_BACK";
        case EntryStatus::QUEUED_HUMAN: return "QUEUED_HUMAN";
        case EntryStatus::ESCALATED: return "ESCALATED";
        case EntryStatus::DENIED: return "DENIED";
    }
    return "?";
}

inline EntryStatus entry_status_from(const std::string& s) {
    if (s == "STAGED") return EntryStatus::STAGED;
    if (s == "COMMITTED") return EntryStatus::COMMITTED;
    if (s == "ROLLED_BACK") return EntryStatus::ROLLED_BACK;
    if (s == "QUEUED_HUMAN") return EntryStatus::QUEUED_HUMAN;
    if (s == "ESCALATED") return EntryStatus::ESCALATED;
    if (s == "DENIED") return EntryStatus::DENIED;
    throw ContractViolation("unknown entry status '" + s + "'");
}

struct ProvenanceRecord {
    std::string source;
    std::string inputs_digest;
    std::string context;
    std::string rationale;
    std::string timestamp;  // logical stamp, deterministic across reruns
    std::string trace_ref;

    bool complete() const {
        return !source.empty() && !inputs_digest.empty() && !context.empty() &&
               !rationale.empty() && !timestamp.empty() && !trace_ref.empty();
    }

    bool operator==(const ProvenanceRecord&) const = default;
};

inline json to_json(const ProvenanceRecord& p) {
    return json{{"source", p.source},     {"inputs_digest", p.inputs_digest},
                {"context", p.context},   {"rationale", p.rationale},
                {"timestamp", p.timestamp}, {"trace_ref", p.trace_ref}};
}

inline ProvenanceRecord provenance_from_json(const json& j) {
    ProvenanceRecord p;
    p.source = j.value("source", "");
    p.inputs_digest = j.value("inputs_digest", "");
    p.context = j.value("context", "");
    p.rationale = j.value("rationale", "");
    p.timestamp = j.value("timestamp", "");
    p.trace_ref = j.value("trace_ref", "");
    return p;
}

struct LedgerEntry {
    std::string key;
    Patch patch;
    std::vector<Patch> rollback_set;  // filled at commit time
    ProvenanceRecord provenance;
    TrustCounters trust;
    EntryStatus status = EntryStatus::STAGED;
    uint64_t seq = 0;
    std::optional<CanaryReport> canary;
    std::string denial_rationale;

    double rho() const { return trust.rho(); }
};

enum class StageResult { OK, COVERAGE_RESOLVED, REVERSE_OVERRIDDEN, REVERSE_ESCALATE_HUMAN };

inline const char* to_string(StageResult r) {
    switch (r) {
        case StageResult::OK: return "ok";
        case StageResult::COVERAGE_RESOLVED: return "coverage_resolved";
        case StageResult::REVERSE_OVERRIDDEN: return "reverse_overridden";
        case StageResult::REVERSE_ESCALATE_HUMAN: return "reverse_escalate_human";
    }
    return "?";
}

struct GateDecision {
    enum class Tag { AUTO_APPROVE, QUEUE_HUMAN } tag = Tag::AUTO_APPROVE;
    std::vector<std::string> reasons;
};

struct GateConfig {
    double tau_impact = 0.6;       // risk ceiling before human review
    double tau_conf = 0.5;         // confidence floor on the aggregate
    double tighten_factor = 1.2;   // applied to tau_conf after a rollback
    double tighten_half_life = 25; // tasks; full release after 50
    double tau_override = 0.8;     // trust needed to override a reverse conflict
    size_t max_history = 50;       // consolidation trigger
};

class GovernanceLedger {
public:
    GovernanceLedger() = default;
    explicit GovernanceLedger(GateConfig cfg) : cfg_(cfg) {}

    // Append every event line to `path` as it happens.
    void open(const std::string& path) {
        sink_.open(path, std::ios::out | std::ios::trunc);
        if (!sink_) throw GovernanceError("cannot open ledger file '" + path + "'");
        for (const auto& ev : events_) sink_ << ev.dump() << "\n";
        sink_.flush();
    }

    const GateConfig& config() const { return cfg_; }

    // --- conflict detection and staging (coverage / reverse) -----------------

    StageResult check_and_stage(const Patch& patch, ProvenanceRecord prov,
                                ProcessKnowledgeGraph& pkg,
                                double rho_candidate = TrustCounters{}.rho()) {
        std::string key = edit_key(patch);
        if (LedgerEntry* existing = active_entry(key)) {
            if (patch_subject(existing->patch) != patch_subject(patch)) {
                pre_rollback(*existing, pkg);
                stage_entry(key, patch, std::move(prov), pkg);
                return StageResult::COVERAGE_RESOLVED;
            }
            if (negates(existing->patch, patch)) {
                if (rho_candidate >= cfg_.tau_override) {
                    // Rolling back the prior edit IS the negation; staging the
                    // reverse patch on top would just double-negate.
                    pre_rollback(*existing, pkg);
                    return StageResult::REVERSE_OVERRIDDEN;
                }
                LedgerEntry& e = append_entry(key, patch, std::move(prov));
                e.status = EntryStatus::ESCALATED;
                emit("queued", e, {{"reason", "reverse_conflict"}});
                return StageResult::REVERSE_ESCALATE_HUMAN;
            }
        }
        stage_entry(key, patch, std::move(prov), pkg);
        return StageResult::OK;
    }

    // Escalations arriving from outside the staging path (causal guardrail).
    LedgerEntry& escalate(const Patch& patch, ProvenanceRecord prov,
                          const std::string& reason) {
        LedgerEntry& e = append_entry(edit_key(patch), patch, std::move(prov));
        e.status = EntryStatus::ESCALATED;
        emit("queued", e, {{"reason", reason}});
        return e;
    }

    LedgerEntry& queue_human(const std::string& key, const std::string& reason) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::STAGED)
            throw GovernanceError("only staged entries can queue for review");
        e.status = EntryStatus::QUEUED_HUMAN;
        emit("queued", e, {{"reason", reason}});
        return e;
    }

    // --- human gate -----------------------------------------------------------

    GateDecision gate(const ScoreBreakdown& b) const {
        GateDecision d;
        double conf_floor = cfg_.tau_conf * tighten_multiplier();
        if (b.s_risk > cfg_.tau_impact)
            d.reasons.push_back("risk above " + std::to_string(cfg_.tau_impact));
        if (b.aggregate < conf_floor)
            d.reasons.push_back("aggregate below confidence floor");
        d.tag = d.reasons.empty() ? GateDecision::Tag::AUTO_APPROVE
                                  : GateDecision::Tag::QUEUE_HUMAN;
        return d;
    }

    void attach_canary(const std::string& key, const CanaryReport& rep) {
        require_latest(key).canary = rep;
    }

    // --- commit / rollback ------------------------------------------------------

    LedgerEntry& commit(const std::string& key, ProcessKnowledgeGraph& pkg) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::STAGED)
            throw GovernanceError("commit requires a staged entry, found " +
                                  std::string(to_string(e.status)));
        if (!e.provenance.complete())
            throw GovernanceError("commit requires complete provenance for key " + key);
        e.rollback_set = compute_rollback(pkg.op(e.patch.scope), e.patch);
        pkg.apply(e.patch);
        e.trust = TrustCounters{};
        e.status = EntryStatus::COMMITTED;
        emit("committed", e, {});
        return e;
    }

    // Deterministic one-step reversion of a committed edit.
    void rollback(const std::string& key, ProcessKnowledgeGraph& pkg) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::COMMITTED)
            throw GovernanceError("rollback of non-committed key " + key);
        pkg.apply_all(e.rollback_set);
        e.status = EntryStatus::ROLLED_BACK;
        tightened_at_ = task_clock_;
        tightened_ = true;
        emit("rolled_back", e, {{"reason", "explicit"}});
    }

    // Canary-failure path: the staged edit never reached the PKG.
    void unstage(const std::string& key, const std::string& reason) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::STAGED)
            throw GovernanceError("unstage requires a staged entry");
        e.status = EntryStatus::ROLLED_BACK;
        emit("rolled_back", e, {{"reason", reason}});
    }

    // --- trust ------------------------------------------------------------------

    double trust_update(const std::string& key, bool success) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::COMMITTED)
            throw GovernanceError("trust update on non-committed key " + key);
        if (success)
            ++e.trust.s;
        else
            ++e.trust.f;
        emit("trust", e, {{"outcome", success ? "success" : "failure"}});
        return e.trust.rho();
    }

    bool rollback_flagged_for(const std::string& key) const {
        const LedgerEntry* e = latest(key);
        return e && e->status == EntryStatus::COMMITTED && rollback_flagged(e->trust);
    }

    // --- review queue -------------------------------------------------------------

    std::vector<const LedgerEntry*> review_queue() const {
        std::vector<const LedgerEntry*> out;
        for (const auto& [key, hist] : history_) {
            const LedgerEntry& e = hist.back();
            if (e.status == EntryStatus::QUEUED_HUMAN || e.status == EntryStatus::ESCALATED)
                out.push_back(&e);
        }
        std::sort(out.begin(), out.end(),
                  [](const LedgerEntry* a, const LedgerEntry* b) { return a->seq < b->seq; });
        return out;
    }

    // Approval routes the entry back to STAGED so it proceeds to canary.
    LedgerEntry& approve(const std::string& key) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::QUEUED_HUMAN && e.status != EntryStatus::ESCALATED)
            throw GovernanceError("approve requires a queued or escalated entry");
        e.trust.s += 5;
        e.status = EntryStatus::STAGED;
        emit("approved", e, {});
        return e;
    }

    LedgerEntry& deny(const std::string& key, const std::string& rationale) {
        LedgerEntry& e = require_latest(key);
        if (e.status != EntryStatus::QUEUED_HUMAN && e.status != EntryStatus::ESCALATED)
            throw GovernanceError("deny requires a queued or escalated entry");
        e.trust.f += 10;
        e.status = EntryStatus::DENIED;
        e.denial_rationale = rationale;
        emit("denied", e, {{"rationale", rationale}});
        return e;
    }

    // --- consolidation --------------------------------------------------------------

    // Squash an over-long history to its net structural effect: the PKG is
    // unwound to the pre-key baseline and a single canonical patch is staged
    // with a fresh trust prior, pending fresh canary evidence. A net-zero
    // history removes the key outright.
    bool consolidate(const std::string& key, ProcessKnowledgeGraph& pkg) {
        auto it = history_.find(key);
        if (it == history_.end() || it->second.size() <= cfg_.max_history)
            throw GovernanceError("consolidation requires history beyond " +
                                  std::to_string(cfg_.max_history) + " entries");
        auto& hist = it->second;
        const std::string scope = hist.back().patch.scope;
        Operator current = pkg.op(scope);
        Operator base = current;
        std::vector<Patch> unwind;
        for (auto e = hist.rbegin(); e != hist.rend(); ++e) {
            if (e->status != EntryStatus::COMMITTED) continue;
            for (const auto& p : e->rollback_set) {
                base = apply_patch(base, p);
                unwind.push_back(p);
            }
        }
        if (base == current) {
            json ev;
            ev["key"] = key;
            ev["net"] = "zero";
            emit_raw("consolidated", std::move(ev));
            history_.erase(it);
            return false;
        }
        Patch canonical = net_patch(base, current, hist.back().patch);
        if (!unwind.empty()) pkg.apply_all(unwind);

        LedgerEntry entry;
        entry.key = key;
        entry.patch = canonical;
        entry.provenance = hist.back().provenance;
        entry.provenance.source = "consolidation";
        entry.provenance.rationale = "net effect of " + std::to_string(hist.size()) +
                                     " squashed edits";
        entry.trust = TrustCounters{};
        entry.status = EntryStatus::STAGED;
        entry.seq = next_seq_++;
        json ev;
        ev["key"] = key;
        ev["net"] = "canonical";
        ev["canonical"] = to_json(canonical);
        json unwound = json::array();
        for (const auto& p : unwind) unwound.push_back(to_json(p));
        ev["unwind"] = unwound;
        ev["provenance"] = to_json(entry.provenance);
        ev["seq"] = entry.seq;
        emit_raw("consolidated", std::move(ev));
        hist.clear();
        hist.push_back(std::move(entry));
        return true;
    }

    // --- queries ----------------------------------------------------------------------

    const LedgerEntry* latest(const std::string& key) const {
        auto it = history_.find(key);
        return it == history_.end() || it->second.empty() ? nullptr : &it->second.back();
    }

    size_t history_size(const std::string& key) const {
        auto it = history_.find(key);
        return it == history_.end() ? 0 : it->second.size();
    }

    const std::map<std::string, std::vector<LedgerEntry>>& entries() const {
        return history_;
    }

    size_t committed_count() const {
        size_t n = 0;
        for (const auto& [k, hist] : history_)
            for (const auto& e : hist)
                if (e.status == EntryStatus::COMMITTED) ++n;
        return n;
    }

    const std::vector<json>& events() const { return events_; }

    void tick_task() { ++task_clock_; }
    uint64_t task_clock() const { return task_clock_; }

    // --- event-sourced reconstruction ----------------------------------------------------

    static std::vector<json> load_events(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw GovernanceError("cannot read ledger file '" + path + "'");
        std::vector<json> out;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            out.push_back(json::parse(line));
        }
        return out;
    }

    // Replaying the event history rebuilds entry statuses, trust counters and,
    // when a PKG is supplied, the exact operator store and version.
    static GovernanceLedger replay(const std::vector<json>& events,
                                   ProcessKnowledgeGraph* pkg) {
        GovernanceLedger led;
        for (const json& ev : events) {
            std::string type = ev.at("type").get<std::string>();
            if (type == "consolidated") {
                std::string key = ev.at("key").get<std::string>();
                if (ev.at("net").get<std::string>() == "zero") {
                    led.history_.erase(key);
                    continue;
                }
                std::vector<Patch> unwind;
                for (const auto& p : ev.at("unwind")) unwind.push_back(patch_from_json(p));
                if (pkg && !unwind.empty()) pkg->apply_all(unwind);
                LedgerEntry e;
                e.key = key;
                e.patch = patch_from_json(ev.at("canonical"));
                e.provenance = provenance_from_json(ev.at("provenance"));
                e.status = EntryStatus::STAGED;
                e.seq = ev.value("seq", uint64_t{0});
                led.history_[key] = {std::move(e)};
                continue;
            }
            std::string key = ev.at("entry").at("key").get<std::string>();
            if (type == "staged" || type == "queued") {
                LedgerEntry e = entry_from_json(ev.at("entry"));
                led.history_[key].push_back(std::move(e));
            } else {
                auto it = led.history_.find(key);
                if (it == led.history_.end() || it->second.empty())
                    throw GovernanceError("event replay references unknown key " + key);
                LedgerEntry& e = it->second.back();
                LedgerEntry recorded = entry_from_json(ev.at("entry"));
                if (type == "committed") {
                    if (pkg) pkg->apply(e.patch);
                } else if (type == "rolled_back") {
                    if (pkg && e.status == EntryStatus::COMMITTED)
                        pkg->apply_all(recorded.rollback_set);
                }
                e.status = recorded.status;
                e.trust = recorded.trust;
                e.rollback_set = recorded.rollback_set;
                e.denial_rationale = recorded.denial_rationale;
            }
        }
        led.next_seq_ = events.size();
        return led;
    }

    static json entry_json(const LedgerEntry& e) {
        json j;
        j["key"] = e.key;
        j["seq"] = e.seq;
        j["status"] = to_string(e.status);
        j["patch"] = to_json(e.patch);
        json rb = json::array();
        for (const auto& p : e.rollback_set) rb.push_back(to_json(p));
        j["rollback_set"] = rb;
        j["provenance"] = to_json(e.provenance);
        j["trust"] = to_json(e.trust);
        if (!e.denial_rationale.empty()) j["denial_rationale"] = e.denial_rationale;
        if (e.canary) {
            j["canary"] = {{"n", e.canary->n_canary},
                           {"pass", e.canary->n_pass},
                           {"mitigated", e.canary->n_mitigated},
                           {"csr", e.canary->csr}};
        }
        return j;
    }

private:
    static LedgerEntry entry_from_json(const json& j) {
        LedgerEntry e;
        e.key = j.at("key").get<std::string>();
        e.seq = j.value("seq", uint64_t{0});
        e.status = entry_status_from(j.at("status").get<std::string>());
        e.patch = patch_from_json(j.at("patch"));
        if (j.contains("rollback_set"))
            for (const auto& p : j["rollback_set"]) e.rollback_set.push_back(patch_from_json(p));
        e.provenance = provenance_from_json(j.value("provenance", json::object()));
        if (j.contains("trust")) e.trust = trust_from_json(j["trust"]);
        e.denial_rationale = j.value("denial_rationale", "");
        return e;
    }

    static bool negates(const Patch& a, const Patch& b) {
        if (patch_subject(a) != patch_subject(b)) return false;
        return (a.action == PatchAction::Add && b.action == PatchAction::Remove) ||
               (a.action == PatchAction::Remove && b.action == PatchAction::Add);
    }

    LedgerEntry* active_entry(const std::string& key) {
        auto it = history_.find(key);
        if (it == history_.end()) return nullptr;
        for (auto e = it->second.rbegin(); e != it->second.rend(); ++e)
            if (e->status == EntryStatus::STAGED || e->status == EntryStatus::COMMITTED)
                return &*e;
        return nullptr;
    }

    LedgerEntry& require_latest(const std::string& key) {
        auto it = history_.find(key);
        if (it == history_.end() || it->second.empty())
            throw GovernanceError("unknown ledger key " + key);
        return it->second.back();
    }

    void pre_rollback(LedgerEntry& e, ProcessKnowledgeGraph& pkg) {
        if (e.status == EntryStatus::COMMITTED) pkg.apply_all(e.rollback_set);
        e.status = EntryStatus::ROLLED_BACK;
        emit("rolled_back", e, {{"reason", "pre_rollback"}});
    }

    LedgerEntry& append_entry(const std::string& key, const Patch& patch,
                              ProvenanceRecord prov) {
        LedgerEntry e;
        e.key = key;
        e.patch = patch;
        e.provenance = std::move(prov);
        e.seq = next_seq_++;
        history_[key].push_back(std::move(e));
        return history_[key].back();
    }

    void stage_entry(const std::string& key, const Patch& patch, ProvenanceRecord prov,
                     ProcessKnowledgeGraph& pkg) {
        (void)apply_patch(pkg.op(patch.scope), patch);  // dry run; malformed edits throw
        LedgerEntry& e = append_entry(key, patch, std::move(prov));
        e.status = EntryStatus::STAGED;
        emit("staged", e, {});
    }

    double tighten_multiplier() const {
        if (!tightened_) return 1.0;
        double t = static_cast<double>(task_clock_ - tightened_at_);
        if (t >= 2 * cfg_.tighten_half_life) return 1.0;  // fully released
        return 1.0 + (cfg_.tighten_factor - 1.0) * std::pow(0.5, t / cfg_.tighten_half_life);
    }

    void emit(const std::string& type, const LedgerEntry& e, json extra) {
        json ev;
        ev["type"] = type;
        ev["ts"] = events_.size();
        ev["entry"] = entry_json(e);
        for (auto& [k, v] : extra.items()) ev[k] = v;
        push_event(std::move(ev));
    }

    void emit_raw(const std::string& type, json ev) {
        ev["type"] = type;
        ev["ts"] = events_.size();
        push_event(std::move(ev));
    }

    void push_event(json ev) {
        if (sink_.is_open()) {
            sink_ << ev.dump() << "\n";
            sink_.flush();
        }
        events_.push_back(std::move(ev));
    }

    GateConfig cfg_;
    std::map<std::string, std::vector<LedgerEntry>> history_;
    std::vector<json> events_;
    std::ofstream sink_;
    uint64_t next_seq_ = 0;
    uint64_t task_clock_ = 0;
    uint64_t tightened_at_ = 0;
    bool tightened_ = false;

    // Single canonical patch turning `base` into `current` on the key's slot.
    static Patch net_patch(const Operator& base, const Operator& current,
                           const Patch& last) {
        Patch p;
        p.scope = last.scope;
        p.edit_type = last.edit_type;
        p.rationale = "consolidated";
        switch (last.edit_type) {
            case PatchType::ADD_PRECONDITION: {
                const std::string& name = last.predicate.name;
                auto find_in = [&](const std::vector<Predicate>& v) -> const Predicate* {
                    for (const auto& q : v)
                        if (q.name == name) return &q;
                    return nullptr;
                };
                const Predicate* in_base = find_in(base.pre);
                const Predicate* in_cur = find_in(current.pre);
                p.target = "pre";
                if (!in_base && in_cur) {
                    p.action = PatchAction::Add;
                    p.predicate = *in_cur;
                } else if (in_base && !in_cur) {
                    p.action = PatchAction::Remove;
                    p.predicate = *in_base;
                } else if (in_base && in_cur) {
                    p.action = PatchAction::Replace;
                    p.predicate = *in_cur;
                } else {
                    throw GovernanceError("cannot derive net precondition patch");
                }
                return p;
            }
            case PatchType::REFINE_EFFECT: {
                for (size_t i = 0; i < base.eff.size() && i < current.eff.size(); ++i) {
                    if (base.eff[i] == current.eff[i]) continue;
                    p.action = PatchAction::Replace;
                    p.target = base.eff[i].name;
                    p.predicate = current.eff[i];
                    return p;
                }
                throw GovernanceError("cannot derive net effect patch");
            }
            case PatchType::UPDATE_TOOL_SCHEMA: {
                p.schema_delta.version = current.tool_schema.version;
                const SchemaField* removed = nullptr;
                const SchemaField* added = nullptr;
                const SchemaField* changed_from = nullptr;
                const SchemaField* changed_to = nullptr;
                for (const auto& f : base.tool_schema.fields) {
                    const SchemaField* cur = current.tool_schema.field(f.name);
                    if (!cur)
                        removed = &f;
                    else if (cur->type != f.type) {
                        changed_from = &f;
                        changed_to = cur;
                    }
                }
                for (const auto& f : current.tool_schema.fields)
                    if (!base.tool_schema.field(f.name)) added = &f;
                if (removed && added) {
                    p.action = PatchAction::Replace;
                    p.target = removed->name;
                    p.schema_delta.field = added->name;
                    p.schema_delta.type = added->type;
                } else if (added) {
                    p.action = PatchAction::Add;
                    p.target = added->name;
                    p.schema_delta.field = added->name;
                    p.schema_delta.type = added->type;
                } else if (removed) {
                    p.action = PatchAction::Remove;
                    p.target = removed->name;
                    p.schema_delta.field = removed->name;
                    p.schema_delta.type = removed->type;
                } else if (changed_from) {
                    p.action = PatchAction::Replace;
                    p.target = changed_from->name;
                    p.schema_delta.field = changed_to->name;
                    p.schema_delta.type = changed_to->type;
                } else if (!current.tool_schema.fields.empty()) {
                    // version-only drift
                    const SchemaField& f = current.tool_schema.fields.front();
                    p.action = PatchAction::Replace;
                    p.target = f.name;
                    p.schema_delta.field = f.name;
                    p.schema_delta.type = f.type;
                } else {
                    throw GovernanceError("cannot derive net schema patch");
                }
                return p;
            }
        }
        throw GovernanceError("cannot derive net patch");
    }
};

}  // namespace opmend

#pragma once
// Verify-before-act: simulate the next h steps' preconditions, repair locally
// (parameter rebinds or trusted operator substitutes, at most two swapped
// steps), or block. Verdicts are memoized on (plan prefix, state, PKG version).

#include "opmend/pkg.hpp"
#include "opmend/planner.hpp"
#include "opmend/trace.hpp"

#include <list>
#include <unordered_map>

namespace opmend {

enum class VerdictTag { ALLOW, REPAIR, BLOCK };

inline const char* to_string(VerdictTag t) {
    switch (t) {
        case VerdictTag::ALLOW: return "allow";
        case VerdictTag::REPAIR: return "repair";
        case VerdictTag::BLOCK: return "block";
    }
    return "?";
}

struct RepairDelta {
    struct Swap {
        size_t index;
        PlanStep replacement;
        bool operator==(const Swap&) const = default;
    };
    std::vector<Swap> swaps;  // never more than two
    bool operator==(const RepairDelta&) const = default;
};

struct Verdict {
    VerdictTag tag = VerdictTag::ALLOW;
    std::optional<size_t> failing_step;
    std::optional<RepairDelta> repair;
    bool from_cache = false;

    bool operator==(const Verdict& o) const {
        return tag == o.tag && failing_step == o.failing_step && repair == o.repair;
    }
};

class Verifier {
public:
    explicit Verifier(size_t cache_capacity = 4096) : capacity_(cache_capacity) {}

    // Trust lookup for repair ranking: operator name -> rho of its most recent
    // committed patch. Operators without history rank at the optimistic prior.
    void set_trust(std::map<std::string, double> trust) { trust_ = std::move(trust); }
    void set_trust(const std::string& op_name, double rho) { trust_[op_name] = rho; }

    Verdict verify(const Plan& plan, const SymbolicState& state,
                   const ProcessKnowledgeGraph& pkg, const Ontology& onto, size_t h,
                   const ExperiencePool* pool = nullptr) {
        if (h < 1) throw ContractViolation("lookahead h must be >= 1");
        std::string key = cache_key(plan, state, pkg, h);
        if (Verdict* hit = cache_get(key)) {
            ++hits_;
            Verdict v = *hit;
            v.from_cache = true;
            return v;
        }
        ++misses_;
        Verdict v = check(plan, state, pkg, onto, h, pool);
        cache_put(key, v);
        return v;
    }

    // Rebind or substitute the failing step so that the swapped segment keeps
    // the goal-relevant add effects. One cascade fix on the following step is
    // allowed, keeping the delta within two swaps.
    std::optional<RepairDelta> local_repair(const Plan& plan, size_t failing_step,
                                            const SymbolicState& state_before,
                                            const ProcessKnowledgeGraph& pkg,
                                            const Ontology& onto,
                                            const ExperiencePool* pool) const {
        if (failing_step >= plan.steps.size()) return std::nullopt;
        const PlanStep& failing = plan.steps[failing_step];
        std::set<std::string> relevant = goal_relevant(plan);

        std::vector<PlanStep> candidates =
            repair_candidates(failing, state_before, pkg, onto, pool, relevant);
        for (const PlanStep& cand : candidates) {
            RepairDelta delta;
            delta.swaps.push_back({failing_step, cand});
            // Re-simulate the tail; if exactly the next step broke, try one
            // more swap for it, otherwise give up on this candidate.
            auto broken = first_broken_after(plan, delta, state_before, failing_step, pkg);
            if (!broken) return delta;
            if (*broken == failing_step + 1 && *broken < plan.steps.size()) {
                SymbolicState mid = apply_effects(state_before, pkg.op(cand.op_name), cand);
                auto second = repair_candidates(plan.steps[*broken], mid, pkg, onto, pool,
                                                relevant);
                for (const PlanStep& c2 : second) {
                    RepairDelta two = delta;
                    two.swaps.push_back({*broken, c2});
                    if (!first_broken_after(plan, two, state_before, failing_step, pkg))
                        return two;
                }
            }
        }
        return std::nullopt;
    }

    size_t cache_hits() const { return hits_; }
    size_t cache_misses() const { return misses_; }
    double hit_rate() const {
        size_t total = hits_ + misses_;
        return total == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(total);
    }
    void reset_stats() { hits_ = misses_ = 0; }

private:
    Verdict check(const Plan& plan, const SymbolicState& state,
                  const ProcessKnowledgeGraph& pkg, const Ontology& onto, size_t h,
                  const ExperiencePool* pool) const {
        size_t horizon = std::min(h, plan.steps.size());
        SymbolicState sim = state;
        for (size_t i = 0; i < horizon; ++i) {
            const PlanStep& step = plan.steps[i];
            const Operator& op = pkg.op(step.op_name);
            if (!step_pre_holds(sim, op, step)) {
                Verdict v;
                v.failing_step = i;
                if (auto delta = local_repair(plan, i, sim, pkg, onto, pool)) {
                    v.tag = VerdictTag::REPAIR;
                    v.repair = std::move(delta);
                } else {
                    v.tag = VerdictTag::BLOCK;
                }
                return v;
            }
            sim = apply_effects(sim, op, step);
        }
        return Verdict{};
    }

    static bool step_pre_holds(const SymbolicState& sim, const Operator& op,
                               const PlanStep& step) {
        for (const auto& p : grounded_pre(op, step)) {
            if (!p.ground()) return false;  // unbound slot: cannot certify
            if (!sim.holds(p)) return false;
        }
        return true;
    }

    static std::set<std::string> goal_relevant(const Plan& plan) {
        std::set<std::string> names;
        for (const auto& g : plan.goal) names.insert(g.name);
        return names;
    }

    // Add-effect names of a step, restricted to goal-relevant ones when the
    // plan declares a goal.
    static std::set<std::string> relevant_adds(const Operator& op, const PlanStep& step,
                                               const std::set<std::string>& relevant) {
        std::set<std::string> out;
        for (const auto& e : grounded_eff(op, step)) {
            if (e.negated) continue;
            if (relevant.empty() || relevant.count(e.name)) out.insert(e.name);
        }
        return out;
    }

    double trust_of(const std::string& op_name) const {
        auto it = trust_.find(op_name);
        return it == trust_.end() ? 2.0 / 3.0 : it->second;
    }

    // Candidates: (a) rebindings recorded as micro-patches from prior repairs,
    // (b) fresh rebindings of the same operator, (c) substitute operators
    // covering the same goal-relevant add effects. Ranked by trust, then cost,
    // then name, then printable form.
    std::vector<PlanStep> repair_candidates(const PlanStep& failing,
                                            const SymbolicState& state,
                                            const ProcessKnowledgeGraph& pkg,
                                            const Ontology& onto, const ExperiencePool* pool,
                                            const std::set<std::string>& relevant) const {
        std::vector<PlanStep> out;
        const Operator& op = pkg.op(failing.op_name);
        std::set<std::string> needed = relevant_adds(op, failing, relevant);

        auto consider = [&](const PlanStep& cand, const Operator& cop) {
            if (!step_pre_holds(state, cop, cand)) return;
            if (relevant_adds(cop, cand, relevant) != needed) return;
            if (cand == failing) return;
            out.push_back(cand);
        };

        if (pool) {
            for (const RepairEvent* ev : pool->repairs_for(failing.op_name)) {
                PlanStep cand = failing;
                for (size_t i = 0; i < cand.args.size(); ++i) {
                    const std::string& var = cand.arg_vars[i];
                    if (var.empty()) continue;
                    if (auto it = ev->repaired_binding.find(var);
                        it != ev->repaired_binding.end())
                        cand.args[i] = Term::constant(it->second);
                }
                consider(cand, op);
            }
        }

        for (const PlanStep& cand : rebindings(failing, op, onto)) consider(cand, op);

        for (const auto& [name, cop] : pkg.operators()) {
            if (name == failing.op_name) continue;
            if (cop.params.size() != op.params.size()) continue;
            PlanStep cand = failing;
            cand.op_name = name;
            consider(cand, cop);
            for (const PlanStep& re : rebindings(cand, cop, onto)) consider(re, cop);
        }

        std::stable_sort(out.begin(), out.end(), [&](const PlanStep& a, const PlanStep& b) {
            double ta = trust_of(a.op_name), tb = trust_of(b.op_name);
            if (ta != tb) return ta > tb;
            double ca = pkg.op(a.op_name).cost, cb = pkg.op(b.op_name).cost;
            if (ca != cb) return ca < cb;
            if (a.op_name != b.op_name) return a.op_name < b.op_name;
            return a.str() < b.str();
        });
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // Alternative assignments for args that originated as variables (at most
    // one slot varied at a time: repairs are parameter rebinds, not redesigns).
    static std::vector<PlanStep> rebindings(const PlanStep& step, const Operator& op,
                                            const Ontology& onto) {
        std::vector<PlanStep> out;
        for (size_t i = 0; i < step.args.size(); ++i) {
            if (step.arg_vars[i].empty()) continue;
            const std::string& type = i < op.params.size() ? op.params[i].type : "";
            for (const auto& entity : onto.entities_of_type(type)) {
                if (!step.args[i].is_variable && step.args[i].name == entity) continue;
                PlanStep cand = step;
                cand.args[i] = Term::constant(entity);
                out.push_back(std::move(cand));
            }
        }
        return out;
    }

    // Simulate from the failing index with swaps applied; first index whose
    // preconditions break, or nullopt when the whole tail is clean.
    std::optional<size_t> first_broken_after(const Plan& plan, const RepairDelta& delta,
                                             const SymbolicState& state_before,
                                             size_t from, const ProcessKnowledgeGraph& pkg) const {
        SymbolicState sim = state_before;
        for (size_t i = from; i < plan.steps.size(); ++i) {
            const PlanStep* step = &plan.steps[i];
            for (const auto& sw : delta.swaps)
                if (sw.index == i) step = &sw.replacement;
            const Operator& op = pkg.op(step->op_name);
            if (!step_pre_holds(sim, op, *step)) return i;
            sim = apply_effects(sim, op, *step);
        }
        return std::nullopt;
    }

    std::string cache_key(const Plan& plan, const SymbolicState& state,
                          const ProcessKnowledgeGraph& pkg, size_t h) const {
        Sha256 hash;
        size_t horizon = std::min(h, plan.steps.size());
        for (size_t i = 0; i < horizon; ++i) hash.update(plan.steps[i].str() + ";");
        hash.update("|");
        for (const auto& f : state.facts()) hash.update(f.str() + ";");
        hash.update("|v" + std::to_string(pkg.version()) + "|h" + std::to_string(h));
        auto d = hash.digest();
        return std::string(reinterpret_cast<const char*>(d.data()), d.size());
    }

    Verdict* cache_get(const std::string& key) {
        auto it = index_.find(key);
        if (it == index_.end()) return nullptr;
        lru_.splice(lru_.begin(), lru_, it->second);
        return &it->second->second;
    }

    void cache_put(const std::string& key, Verdict v) {
        if (index_.count(key)) return;
        lru_.emplace_front(key, std::move(v));
        index_[key] = lru_.begin();
        if (lru_.size() > capacity_) {
            index_.erase(lru_.back().first);
            lru_.pop_back();
        }
    }

    size_t capacity_;
    std::list<std::pair<std::string, Verdict>> lru_;
    std::unordered_map<std::string, std::list<std::pair<std::string, Verdict>>::iterator>
        index_;
    std::map<std::string, double> trust_;
    size_t hits_ = 0;
    size_t misses_ = 0;
};

}  // namespace opmend

#pragma once
// HTN planning over the PKG: method expansion (compile), precondition-aware
// parameter binding (ground), and exhaustive replan after knowledge edits.

#include "opmend/pkg.hpp"
#include "opmend/sha256.hpp"

#include <unordered_map>

namespace opmend {

struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Instruction {
    std::string id;
    std::string task_class;
    std::map<std::string, std::string> slots;  // slot -> entity
    std::vector<Predicate> goal;
    std::string text;  // display only

    std::string content_hash() const {
        std::string s = task_class;
        for (const auto& [k, v] : slots) s += "|" + k + "=" + v;
        return Sha256::hex(s);
    }
};

struct Plan {
    std::vector<PlanStep> steps;
    std::vector<Predicate> goal;
    std::string instruction_id;
    size_t variable_slots = 0;   // slots that started as variables
    size_t unbound_slots = 0;    // still variable after grounding
    std::vector<uint8_t> step_pre_unsat;  // per step: no satisfying binding found

    bool empty() const { return steps.empty(); }
    size_t size() const { return steps.size(); }

    // Unbound-slot fraction: the grounding-completeness uncertainty proxy.
    double unbound_fraction() const {
        return variable_slots == 0
                   ? 0.0
                   : static_cast<double>(unbound_slots) / static_cast<double>(variable_slots);
    }

    bool fully_satisfiable() const {
        return unbound_slots == 0 &&
               std::none_of(step_pre_unsat.begin(), step_pre_unsat.end(),
                            [](uint8_t b) { return b != 0; });
    }

    bool operator==(const Plan&) const = default;
};

class Planner {
public:
    explicit Planner(size_t max_plan_len = 12) : max_plan_len_(max_plan_len) {}

    // Recursive method expansion; deterministic for a fixed (instruction,
    // pkg version) pair. Methods are tried in lexicographic name order and the
    // first one expands; alternatives are explored only by replan.
    Plan compile(const Instruction& instr, const ProcessKnowledgeGraph& pkg) const {
        return compile_with(instr, pkg, 0);
    }

    // Cache shared with replan; keyed on (instruction hash, pkg version).
    Plan compile_cached(const Instruction& instr, const ProcessKnowledgeGraph& pkg) {
        std::string key = instr.content_hash() + ":" + std::to_string(pkg.version());
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        Plan p = compile(instr, pkg);
        cache_.emplace(std::move(key), p);
        return p;
    }

    // Bind remaining variables against state entities, preferring assignments
    // whose grounded preconditions hold in the forward-simulated state. Steps
    // with no satisfying assignment are bound to the first typed candidates
    // and flagged; slots with no typed candidate at all stay variable.
    Plan ground(Plan plan, const SymbolicState& state, const ProcessKnowledgeGraph& pkg,
                const Ontology& onto) const {
        SymbolicState sim = state;
        plan.variable_slots = 0;
        plan.unbound_slots = 0;
        plan.step_pre_unsat.assign(plan.steps.size(), 0);
        for (size_t si = 0; si < plan.steps.size(); ++si) {
            PlanStep& step = plan.steps[si];
            const Operator& op = pkg.op(step.op_name);
            bool satisfied = bind_step(step, op, sim, onto, plan.variable_slots,
                                       plan.unbound_slots);
            plan.step_pre_unsat[si] = satisfied ? 0 : 1;
            sim = apply_effects(sim, op, step);
        }
        return plan;
    }

    // Exhaustive method search: the first method whose grounded plan is fully
    // satisfiable wins. Newly committed preconditions steer both operator and
    // argument selection here.
    Plan replan(const Instruction& instr, const ProcessKnowledgeGraph& pkg,
                const SymbolicState& state, const Ontology& onto) const {
        if (instr.task_class.empty()) return make_empty(instr);
        if (!pkg.has_task(instr.task_class))
            throw PlanError("unknown task class '" + instr.task_class + "'");
        const auto& methods = pkg.methods_for(instr.task_class);
        Plan first_attempt;
        bool have_any = false;
        for (size_t mi = 0; mi < methods.size(); ++mi) {
            Plan p = ground(compile_with(instr, pkg, mi), state, pkg, onto);
            if (p.fully_satisfiable()) return p;
            if (!have_any) {
                first_attempt = std::move(p);
                have_any = true;
            }
        }
        if (!have_any) throw PlanError("no applicable method for '" + instr.task_class + "'");
        throw PlanError("no method for '" + instr.task_class +
                        "' yields a satisfiable grounded plan");
    }

    // Replan variant that tolerates unsatisfiable groundings: used for the
    // deliberative (S2) pathway, which prefers a satisfiable alternative but
    // falls back to the best-effort first method rather than aborting.
    Plan deliberative(const Instruction& instr, const ProcessKnowledgeGraph& pkg,
                      const SymbolicState& state, const Ontology& onto) const {
        if (instr.task_class.empty()) return make_empty(instr);
        if (!pkg.has_task(instr.task_class))
            throw PlanError("unknown task class '" + instr.task_class + "'");
        const auto& methods = pkg.methods_for(instr.task_class);
        Plan fallback;
        bool have_any = false;
        for (size_t mi = 0; mi < methods.size(); ++mi) {
            Plan p = ground(compile_with(instr, pkg, mi), state, pkg, onto);
            if (p.fully_satisfiable()) return p;
            if (!have_any) {
                fallback = std::move(p);
                have_any = true;
            }
        }
        if (!have_any) throw PlanError("no applicable method for '" + instr.task_class + "'");
        return fallback;
    }

    void clear_cache() { cache_.clear(); }

private:
    Plan make_empty(const Instruction& instr) const {
        Plan p;
        p.instruction_id = instr.id;
        p.goal = instr.goal;
        return p;
    }

    Plan compile_with(const Instruction& instr, const ProcessKnowledgeGraph& pkg,
                      size_t method_index) const {
        if (instr.task_class.empty()) return make_empty(instr);
        if (!pkg.has_task(instr.task_class))
            throw PlanError("unknown task class '" + instr.task_class + "'");
        Plan p = make_empty(instr);
        Binding binding(instr.slots.begin(), instr.slots.end());
        expand(instr.task_class, binding, pkg, method_index, 0, p);
        if (p.steps.size() > max_plan_len_)
            throw PlanError("plan for '" + instr.task_class + "' exceeds max length " +
                            std::to_string(max_plan_len_));
        return p;
    }

    void expand(const std::string& task, const Binding& binding,
                const ProcessKnowledgeGraph& pkg, size_t method_index, int depth,
                Plan& out) const {
        if (depth > ProcessKnowledgeGraph::kMaxDepth)
            throw PlanError("decomposition of '" + task + "' exceeds depth bound");
        const auto& methods = pkg.methods_for(task);
        if (methods.empty()) throw PlanError("no applicable method for task '" + task + "'");
        const Method& m = methods[std::min(method_index, methods.size() - 1)];
        for (const auto& st : m.steps) {
            if (st.is_task) {
                // Sub-task args rebind the sub-method's params positionally.
                const auto& sub = pkg.methods_for(st.name);
                if (sub.empty()) throw PlanError("no applicable method for task '" + st.name + "'");
                Binding sub_binding;
                const Method& chosen = sub.front();
                for (size_t i = 0; i < st.args.size() && i < chosen.params.size(); ++i) {
                    auto [val, is_var] = resolve(st.args[i], binding);
                    if (!is_var) sub_binding[chosen.params[i].name] = val;
                }
                expand(st.name, sub_binding, pkg, 0, depth + 1, out);
                continue;
            }
            const Operator& op = pkg.op(st.name);
            if (st.args.size() != op.params.size())
                throw PlanError("method '" + m.name + "' step '" + st.name + "' expects " +
                                std::to_string(op.params.size()) + " args, got " +
                                std::to_string(st.args.size()));
            PlanStep step;
            step.op_name = st.name;
            for (size_t i = 0; i < st.args.size(); ++i) {
                auto [val, is_var] = resolve(st.args[i], binding);
                if (is_var) {
                    step.args.push_back(Term::variable(val));
                    step.arg_vars.push_back(val);
                } else {
                    step.args.push_back(Term::constant(val));
                    step.arg_vars.push_back(starts_var(st.args[i]) ? strip_var(st.args[i]) : "");
                }
            }
            out.steps.push_back(std::move(step));
        }
    }

    static bool starts_var(const std::string& s) { return !s.empty() && s[0] == '?'; }
    static std::string strip_var(const std::string& s) { return s.substr(1); }

    // A "?name" arg resolves through the binding or stays a variable; anything
    // else is a literal constant.
    static std::pair<std::string, bool> resolve(const std::string& arg, const Binding& b) {
        if (!starts_var(arg)) return {arg, false};
        std::string name = strip_var(arg);
        if (auto it = b.find(name); it != b.end()) return {it->second, false};
        return {name, true};
    }

    // Backtracking assignment over the step's free variables, candidates in
    // lexicographic entity order. Returns whether the chosen assignment makes
    // every fully-ground precondition hold in `sim`.
    bool bind_step(PlanStep& step, const Operator& op, const SymbolicState& sim,
                   const Ontology& onto, size_t& variable_slots, size_t& unbound) const {
        std::vector<size_t> free_idx;
        for (size_t i = 0; i < step.args.size(); ++i)
            if (step.args[i].is_variable) free_idx.push_back(i);
        variable_slots += free_idx.size();
        if (free_idx.empty()) return entails_checkable(sim, op, step);

        std::vector<std::vector<std::string>> candidates;
        for (size_t i : free_idx) {
            const std::string& type = i < op.params.size() ? op.params[i].type : "";
            candidates.push_back(onto.entities_of_type(type));
        }

        PlanStep best = step;
        if (search(step, op, sim, free_idx, candidates, 0)) return true;

        // No satisfying assignment: fall back to first candidates so execution
        // can proceed (and fail observably); slots with no candidate stay free.
        step = best;
        for (size_t k = 0; k < free_idx.size(); ++k) {
            if (candidates[k].empty()) {
                ++unbound;
            } else {
                step.args[free_idx[k]] = Term::constant(candidates[k].front());
            }
        }
        return false;
    }

    bool search(PlanStep& step, const Operator& op, const SymbolicState& sim,
                const std::vector<size_t>& free_idx,
                const std::vector<std::vector<std::string>>& candidates, size_t k) const {
        if (k == free_idx.size()) return entails_checkable(sim, op, step);
        if (candidates[k].empty()) return false;
        for (const auto& entity : candidates[k]) {
            step.args[free_idx[k]] = Term::constant(entity);
            if (!partial_consistent(sim, op, step)) continue;
            if (search(step, op, sim, free_idx, candidates, k + 1)) return true;
        }
        step.args[free_idx[k]] = Term::variable(step.arg_vars[free_idx[k]]);
        return false;
    }

    // All preconditions that are ground under the current partial assignment
    // must hold; preconditions still mentioning free variables are deferred.
    static bool partial_consistent(const SymbolicState& sim, const Operator& op,
                                   const PlanStep& step) {
        return entails_checkable(sim, op, step);
    }

    static bool entails_checkable(const SymbolicState& sim, const Operator& op,
                                  const PlanStep& step) {
        Binding b = step.binding(op);
        for (const auto& p : op.pre) {
            Predicate g = substitute(p, b);
            if (!g.ground()) continue;
            if (!sim.holds(g)) return false;
        }
        return true;
    }

    size_t max_plan_len_;
    std::unordered_map<std::string, Plan> cache_;
};

}  // namespace opmend

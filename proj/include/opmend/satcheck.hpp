#pragma once
// Brute-force satisfiability over the ground symbol universe, used as the
// consistency check behind patch scoring. State facts are fixed true; atoms
// the state never mentions are free; domain invariants are forbidden
// conjunctions. Capacity-guarded at 2^20 explored assignments -- beyond that
// it refuses loudly instead of passing silently.

#include "opmend/operators.hpp"

#include <set>

namespace opmend {

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

constexpr uint64_t kSatAssignmentCap = 1u << 20;

struct GroundProblem {
    std::vector<Predicate> literals;  // required, ground
    const SymbolicState* state;
    const std::vector<std::vector<Predicate>>* invariants;
};

// Atoms mentioned by the problem but absent from the state: the free booleans.
inline std::vector<Predicate> free_atoms(const GroundProblem& p) {
    std::set<Predicate> atoms;
    for (const auto& l : p.literals) atoms.insert(l.positive());
    for (const auto& conj : *p.invariants)
        for (const auto& a : conj) atoms.insert(a.positive());
    std::vector<Predicate> out;
    for (const auto& a : atoms)
        if (!p.state->holds(a)) out.push_back(a);
    return out;
}

inline bool eval_assignment(const GroundProblem& p, const std::vector<Predicate>& frees,
                            uint64_t mask) {
    auto truth = [&](const Predicate& atom) {
        for (size_t i = 0; i < frees.size(); ++i)
            if (frees[i] == atom) return (mask >> i & 1) != 0;
        return p.state->holds(atom);
    };
    for (const auto& l : p.literals) {
        bool t = truth(l.positive());
        if (l.negated ? t : !t) return false;
    }
    for (const auto& conj : *p.invariants) {
        bool all = !conj.empty();
        for (const auto& a : conj)
            if (!truth(a.positive())) {
                all = false;
                break;
            }
        if (all) return false;  // forbidden conjunction realized
    }
    return true;
}

inline bool sat_ground(const GroundProblem& p, uint64_t& budget) {
    std::vector<Predicate> frees = free_atoms(p);
    if (frees.size() >= 20)
        throw CapacityError("symbol universe too large for brute-force check: " +
                            std::to_string(frees.size()) + " free atoms");
    uint64_t total = 1ull << frees.size();
    if (total > budget)
        throw CapacityError("assignment budget exhausted in satisfiability check");
    budget -= total;
    for (uint64_t mask = 0; mask < total; ++mask)
        if (eval_assignment(p, frees, mask)) return true;
    return false;
}

}  // namespace detail

// SAT(pre ^ state ^ invariants) with existential operator parameters:
// enumerate typed bindings for the free variables, then brute-force the free
// atoms per binding. Variables without typed candidates make the check fail.
inline bool preconditions_satisfiable(const Operator& op, const std::vector<Predicate>& pre,
                                      const SymbolicState& state, const Ontology& onto) {
    std::vector<std::string> vars;
    for (const auto& p : pre)
        for (const auto& t : p.args)
            if (t.is_variable &&
                std::find(vars.begin(), vars.end(), t.name) == vars.end())
                vars.push_back(t.name);

    std::vector<std::vector<std::string>> candidates;
    uint64_t bindings = 1;
    for (const auto& v : vars) {
        const Param* param = op.param(v);
        auto ents = onto.entities_of_type(param ? param->type : "");
        if (ents.empty()) return false;
        bindings *= ents.size();
        if (bindings > detail::kSatAssignmentCap)
            throw CapacityError("binding universe too large for brute-force check");
        candidates.push_back(std::move(ents));
    }

    uint64_t budget = detail::kSatAssignmentCap;
    std::vector<size_t> pick(vars.size(), 0);
    while (true) {
        Binding b;
        for (size_t i = 0; i < vars.size(); ++i) b[vars[i]] = candidates[i][pick[i]];
        detail::GroundProblem problem;
        for (const auto& p : pre) problem.literals.push_back(substitute(p, b));
        problem.state = &state;
        problem.invariants = &onto.invariants;
        bool ground_ok = std::all_of(problem.literals.begin(), problem.literals.end(),
                                     [](const Predicate& l) { return l.ground(); });
        if (ground_ok && detail::sat_ground(problem, budget)) return true;
        // next binding
        size_t i = 0;
        for (; i < vars.size(); ++i) {
            if (++pick[i] < candidates[i].size()) break;
            pick[i] = 0;
        }
        if (i == vars.size()) return false;  // all bindings exhausted
    }
}

}  // namespace opmend

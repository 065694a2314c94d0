#pragma once
// Typed symbolic substrate: terms, predicates, ground state.
//
// Predicates follow closed-world semantics: a fact is true iff present in the
// state; a negated precondition holds iff the positive fact is absent.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace opmend {

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

namespace detail {
inline std::string lower_copy(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}
}  // namespace detail

// A term is a typed constant or a variable. Variables are untyped at the term
// level; their type comes from the operator parameter they bind to.
struct Term {
    std::string name;
    bool is_variable = false;

    static Term constant(std::string n) { return Term{std::move(n), false}; }
    static Term variable(std::string n) { return Term{std::move(n), true}; }

    auto operator<=>(const Term&) const = default;
};

struct Predicate {
    std::string name;
    std::vector<Term> args;
    bool negated = false;

    bool ground() const {
        return std::none_of(args.begin(), args.end(),
                            [](const Term& t) { return t.is_variable; });
    }

    Predicate positive() const {
        Predicate p = *this;
        p.negated = false;
        return p;
    }

    // Printable form, e.g. "¬blocked_card(corporate_card, apr10_12)".
    std::string str() const {
        std::string s = negated ? "!" + name : name;
        s += "(";
        for (size_t i = 0; i < args.size(); ++i) {
            if (i) s += ", ";
            s += args[i].is_variable ? "?" + args[i].name : args[i].name;
        }
        s += ")";
        return s;
    }

    auto operator<=>(const Predicate&) const = default;
};

inline Predicate pred(std::string name, std::vector<std::string> constants,
                      bool negated = false) {
    Predicate p{std::move(name), {}, negated};
    p.args.reserve(constants.size());
    for (auto& c : constants) p.args.push_back(Term::constant(std::move(c)));
    return p;
}

using Binding = std::map<std::string, std::string>;  // variable -> entity

inline Predicate substitute(const Predicate& p, const Binding& b) {
    Predicate out = p;
    for (auto& t : out.args) {
        if (!t.is_variable) continue;
        if (auto it = b.find(t.name); it != b.end()) t = Term::constant(it->second);
    }
    return out;
}

// Typed-constant table plus declared predicate arities and domain invariants
// (conjunctions of ground facts that must never hold simultaneously).
struct Ontology {
    std::vector<std::string> types;
    std::map<std::string, std::string> entity_types;     // entity -> type
    std::map<std::string, size_t> predicate_arity;       // name -> arity
    std::vector<std::vector<Predicate>> invariants;      // forbidden conjunctions

    bool has_entity(const std::string& name) const {
        return entity_types.count(name) > 0;
    }

    std::vector<std::string> entities_of_type(const std::string& type) const {
        std::vector<std::string> out;
        for (const auto& [name, t] : entity_types)
            if (t == type) out.push_back(name);  // map order: already sorted
        return out;
    }

    // Arity is fixed per predicate name across a domain; first sighting pins it.
    void check_arity(const Predicate& p) const {
        auto it = predicate_arity.find(p.name);
        if (it != predicate_arity.end() && it->second != p.args.size())
            throw ContractViolation("predicate '" + p.name + "' arity mismatch: declared " +
                                    std::to_string(it->second) + ", got " +
                                    std::to_string(p.args.size()));
    }
};

// Set of ground facts over typed entities. Negations are never stored; a
// negated query is answered by absence.
class SymbolicState {
public:
    SymbolicState() = default;
    explicit SymbolicState(std::vector<Predicate> facts) {
        for (auto& f : facts) add(std::move(f));
    }

    void add(Predicate fact) {
        if (!fact.ground())
            throw ContractViolation("state facts must be ground: " + fact.str());
        if (fact.negated) {
            facts_.erase(fact.positive());
            return;
        }
        facts_.insert(std::move(fact));
    }

    void remove(const Predicate& fact) { facts_.erase(fact.positive()); }

    bool holds(const Predicate& p) const {
        if (!p.ground())
            throw ContractViolation("entailment query on unground predicate: " + p.str());
        bool present = facts_.count(p.positive()) > 0;
        return p.negated ? !present : present;
    }

    const std::set<Predicate>& facts() const { return facts_; }
    size_t size() const { return facts_.size(); }

    bool operator==(const SymbolicState&) const = default;

private:
    std::set<Predicate> facts_;
};

// Conjunction entailment under closed-world negation: every positive literal
// present, every negated literal absent. Throws on unground literals.
inline bool entails(const SymbolicState& state, const std::vector<Predicate>& pre) {
    return std::all_of(pre.begin(), pre.end(),
                       [&](const Predicate& p) { return state.holds(p); });
}

inline bool entails(const SymbolicState& state, const std::vector<Predicate>& pre,
                    const Binding& binding) {
    return std::all_of(pre.begin(), pre.end(), [&](const Predicate& p) {
        return state.holds(substitute(p, binding));
    });
}

}  // namespace opmend

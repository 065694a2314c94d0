#pragma once
// Typed action schemas: parameters, preconditions, STRIPS effects, cost, and
// the versioned tool schema that adapters call through.

#include "opmend/core.hpp"

namespace opmend {

struct Param {
    std::string name;
    std::string type;
    auto operator<=>(const Param&) const = default;
};

struct SchemaField {
    std::string name;
    std::string type;
    auto operator<=>(const SchemaField&) const = default;
};

struct ToolSchema {
    std::string version = "v1";
    std::vector<SchemaField> fields;

    const SchemaField* field(const std::string& name) const {
        for (const auto& f : fields)
            if (f.name == name) return &f;
        return nullptr;
    }

    auto operator<=>(const ToolSchema&) const = default;
};

// o = <name, params, pre, eff, cost>. Effects are a single list where a
// negated predicate means delete, a positive one means add.
struct Operator {
    std::string name;
    std::vector<Param> params;
    std::vector<Predicate> pre;
    std::vector<Predicate> eff;
    double cost = 1.0;
    ToolSchema tool_schema;

    bool has_param(const std::string& var) const {
        return std::any_of(params.begin(), params.end(),
                           [&](const Param& p) { return p.name == var; });
    }

    const Param* param(const std::string& var) const {
        for (const auto& p : params)
            if (p.name == var) return &p;
        return nullptr;
    }

    // Every variable used in pre/eff must be a declared parameter.
    void validate() const {
        if (name.empty()) throw ContractViolation("operator with empty name");
        if (cost < 0) throw ContractViolation("operator '" + name + "' has negative cost");
        std::set<std::string> field_names;
        for (const auto& f : tool_schema.fields)
            if (!field_names.insert(f.name).second)
                throw ContractViolation("operator '" + name + "' duplicate schema field '" +
                                        f.name + "'");
        auto check = [&](const std::vector<Predicate>& preds, const char* what) {
            for (const auto& p : preds)
                for (const auto& t : p.args)
                    if (t.is_variable && !has_param(t.name))
                        throw ContractViolation("operator '" + name + "' " + what +
                                                " uses unbound variable '" + t.name + "'");
        };
        check(pre, "precondition");
        check(eff, "effect");
    }

    // Pre/eff are conjunctions and STRIPS sets; structural equality ignores
    // their list order (a removal undone by a re-add lands at the back).
    bool operator==(const Operator& o) const {
        auto sorted = [](std::vector<Predicate> v) {
            std::sort(v.begin(), v.end());
            return v;
        };
        return name == o.name && params == o.params && cost == o.cost &&
               tool_schema == o.tool_schema && sorted(pre) == sorted(o.pre) &&
               sorted(eff) == sorted(o.eff);
    }
};

// A grounded operator instance inside a plan: per-argument we remember whether
// the slot came from a variable (and which), so repair can rebind it later.
struct PlanStep {
    std::string op_name;
    std::vector<Term> args;                 // aligned with operator params
    std::vector<std::string> arg_vars;      // original variable name or "" if fixed

    Binding binding(const Operator& op) const {
        Binding b;
        for (size_t i = 0; i < args.size() && i < op.params.size(); ++i)
            if (!args[i].is_variable) b[op.params[i].name] = args[i].name;
        return b;
    }

    size_t unbound_count() const {
        return static_cast<size_t>(std::count_if(
            args.begin(), args.end(), [](const Term& t) { return t.is_variable; }));
    }

    std::string str() const {
        std::string s = op_name + "(";
        for (size_t i = 0; i < args.size(); ++i) {
            if (i) s += ", ";
            s += args[i].is_variable ? "?" + args[i].name : args[i].name;
        }
        return s + ")";
    }

    bool operator==(const PlanStep&) const = default;
};

// Grounded preconditions/effects of a step under its current argument binding.
inline std::vector<Predicate> grounded_pre(const Operator& op, const PlanStep& step) {
    Binding b = step.binding(op);
    std::vector<Predicate> out;
    out.reserve(op.pre.size());
    for (const auto& p : op.pre) out.push_back(substitute(p, b));
    return out;
}

inline std::vector<Predicate> grounded_eff(const Operator& op, const PlanStep& step) {
    Binding b = step.binding(op);
    std::vector<Predicate> out;
    out.reserve(op.eff.size());
    for (const auto& p : op.eff) out.push_back(substitute(p, b));
    return out;
}

// Apply grounded STRIPS effects; skips any effect left unground.
inline SymbolicState apply_effects(const SymbolicState& state, const Operator& op,
                                   const PlanStep& step) {
    SymbolicState next = state;
    for (const auto& e : grounded_eff(op, step)) {
        if (!e.ground()) continue;
        if (e.negated)
            next.remove(e);
        else
            next.add(e);
    }
    return next;
}

}  // namespace opmend

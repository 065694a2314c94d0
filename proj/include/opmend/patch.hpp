#pragma once
// Typed symbolic edits. A patch touches exactly one operator and is restricted
// to three categories: precondition edits, targeted effect replacement, and
// tool-schema field updates. apply_patch is pure; every application has an
// exact inverse (the rollback set).

#include "opmend/operators.hpp"
#include "opmend/sha256.hpp"

namespace opmend {

struct PatchError : std::runtime_error {
    using std::runtime_error::runtime_error;  // unknown/missing target slot
};
struct PatchTypeError : std::runtime_error {
    using std::runtime_error::runtime_error;  // variable not bound by scope params
};

enum class PatchType { ADD_PRECONDITION, REFINE_EFFECT, UPDATE_TOOL_SCHEMA };
enum class PatchAction { Add, Replace, Remove };

inline const char* to_string(PatchType t) {
    switch (t) {
        case PatchType::ADD_PRECONDITION: return "ADD_PRECONDITION";
        case PatchType::REFINE_EFFECT: return "REFINE_EFFECT";
        case PatchType::UPDATE_TOOL_SCHEMA: return "UPDATE_TOOL_SCHEMA";
    }
    return "?";
}

inline const char* to_string(PatchAction a) {
    switch (a) {
        case PatchAction::Add: return "add";
        case PatchAction::Replace: return "replace";
        case PatchAction::Remove: return "remove";
    }
    return "?";
}

// Schema-field delta for UPDATE_TOOL_SCHEMA edits. An empty version means
// "auto-bump the trailing integer of the current version string".
struct SchemaDelta {
    std::string field;
    std::string type;
    std::string version;
    auto operator<=>(const SchemaDelta&) const = default;
};

struct Patch {
    std::string scope;                 // operator name
    PatchType edit_type = PatchType::ADD_PRECONDITION;
    Predicate predicate;               // payload for precondition/effect edits
    SchemaDelta schema_delta;          // payload for schema edits
    std::string target;                // slot: "pre", effect name, or schema field
    PatchAction action = PatchAction::Add;
    std::string rationale;

    bool operator==(const Patch&) const = default;

    std::string summary() const {
        std::string body = edit_type == PatchType::UPDATE_TOOL_SCHEMA
                               ? schema_delta.field + ":" + schema_delta.type
                               : predicate.str();
        return std::string(to_string(edit_type)) + " " + scope + "." + target + " " +
               to_string(action) + " " + body;
    }
};

// The fine-grained payload identity, used by ledger conflict detection to tell
// apart two edits that share an edit key (coverage) from a literal reversal.
inline std::string patch_subject(const Patch& p) {
    if (p.edit_type == PatchType::UPDATE_TOOL_SCHEMA)
        return detail::lower_copy(p.schema_delta.field) + ":" +
               detail::lower_copy(p.schema_delta.type);
    std::string s = p.predicate.negated ? "!" : "";
    s += detail::lower_copy(p.predicate.name);
    for (const auto& a : p.predicate.args) s += "," + detail::lower_copy(a.name);
    return s;
}

// Stable content hash for conflict detection. Canonical form is lowercase and
// arity-tagged, and deliberately excludes the action and rationale so that an
// edit and its reversal collide on the same key.
inline std::string edit_key(const Patch& p) {
    std::string pred_part = p.edit_type == PatchType::UPDATE_TOOL_SCHEMA
                                ? detail::lower_copy(p.schema_delta.field) + "/0"
                                : detail::lower_copy(p.predicate.name) + "/" +
                                      std::to_string(p.predicate.args.size());
    std::string canonical = "scope=" + detail::lower_copy(p.scope) + "|pred=" + pred_part +
                            "|slot=" + detail::lower_copy(p.target);
    return Sha256::hex(canonical);
}

namespace detail {

inline void check_patch_binding(const Operator& op, const Predicate& pred) {
    for (const auto& t : pred.args)
        if (t.is_variable && !op.has_param(t.name))
            throw PatchTypeError("patch predicate variable '?" + t.name +
                                 "' is not a parameter of operator '" + op.name + "'");
}

inline std::string bump_version(const std::string& v) {
    if (v.empty()) return "v2";
    size_t end = v.size();
    size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(v[begin - 1]))) --begin;
    if (begin == end) return v + "2";
    long n = std::stol(v.substr(begin));
    return v.substr(0, begin) + std::to_string(n + 1);
}

}  // namespace detail

// Pure structural edit: returns a new operator, never touches the input.
inline Operator apply_patch(const Operator& op, const Patch& patch) {
    if (patch.scope != op.name)
        throw PatchError("patch scope '" + patch.scope + "' does not match operator '" +
                         op.name + "'");
    Operator out = op;
    switch (patch.edit_type) {
        case PatchType::ADD_PRECONDITION: {
            detail::check_patch_binding(op, patch.predicate);
            if (patch.action == PatchAction::Add) {
                out.pre.push_back(patch.predicate);
            } else if (patch.action == PatchAction::Remove) {
                auto it = std::find(out.pre.begin(), out.pre.end(), patch.predicate);
                if (it == out.pre.end())
                    throw PatchError("no precondition " + patch.predicate.str() +
                                     " to remove on '" + op.name + "'");
                out.pre.erase(it);
            } else {  // REPLACE: swap the same-name precondition in place
                auto it = std::find_if(out.pre.begin(), out.pre.end(), [&](const Predicate& q) {
                    return q.name == patch.predicate.name;
                });
                if (it == out.pre.end())
                    throw PatchError("no precondition named '" + patch.predicate.name +
                                     "' to replace on '" + op.name + "'");
                *it = patch.predicate;
            }
            break;
        }
        case PatchType::REFINE_EFFECT: {
            if (patch.action != PatchAction::Replace)
                throw PatchError("effect refinement only supports replace");
            detail::check_patch_binding(op, patch.predicate);
            auto it = std::find_if(out.eff.begin(), out.eff.end(), [&](const Predicate& q) {
                return q.name == patch.target;
            });
            if (it == out.eff.end())
                throw PatchError("no effect slot '" + patch.target + "' on '" + op.name + "'");
            *it = patch.predicate;
            break;
        }
        case PatchType::UPDATE_TOOL_SCHEMA: {
            auto& fields = out.tool_schema.fields;
            auto at = [&](const std::string& name) {
                return std::find_if(fields.begin(), fields.end(),
                                    [&](const SchemaField& f) { return f.name == name; });
            };
            if (patch.action == PatchAction::Add) {
                if (at(patch.schema_delta.field) != fields.end())
                    throw PatchError("schema field '" + patch.schema_delta.field +
                                     "' already exists on '" + op.name + "'");
                fields.push_back({patch.schema_delta.field, patch.schema_delta.type});
            } else {
                auto it = at(patch.target);
                if (it == fields.end())
                    throw PatchError("no schema field '" + patch.target + "' on '" + op.name +
                                     "'");
                if (patch.action == PatchAction::Remove)
                    fields.erase(it);
                else
                    *it = {patch.schema_delta.field, patch.schema_delta.type};
            }
            out.tool_schema.version = patch.schema_delta.version.empty()
                                          ? detail::bump_version(op.tool_schema.version)
                                          : patch.schema_delta.version;
            break;
        }
    }
    out.validate();
    return out;
}

// Inverse edits, computed against the pre-application operator so that
// apply(rollback_set) restores it exactly (version strings included).
inline std::vector<Patch> compute_rollback(const Operator& before, const Patch& patch) {
    Patch inv = patch;
    inv.rationale = "rollback of " + patch.summary();
    switch (patch.edit_type) {
        case PatchType::ADD_PRECONDITION: {
            if (patch.action == PatchAction::Add) {
                inv.action = PatchAction::Remove;
            } else if (patch.action == PatchAction::Remove) {
                inv.action = PatchAction::Add;
            } else {
                auto it = std::find_if(before.pre.begin(), before.pre.end(),
                                       [&](const Predicate& q) {
                                           return q.name == patch.predicate.name;
                                       });
                if (it == before.pre.end())
                    throw PatchError("cannot invert replace: no prior precondition '" +
                                     patch.predicate.name + "'");
                inv.predicate = *it;
            }
            return {inv};
        }
        case PatchType::REFINE_EFFECT: {
            auto it = std::find_if(before.eff.begin(), before.eff.end(),
                                   [&](const Predicate& q) { return q.name == patch.target; });
            if (it == before.eff.end())
                throw PatchError("cannot invert effect refinement: no slot '" + patch.target +
                                 "'");
            inv.target = patch.predicate.name;
            inv.predicate = *it;
            return {inv};
        }
        case PatchType::UPDATE_TOOL_SCHEMA: {
            inv.schema_delta.version = before.tool_schema.version;
            if (patch.action == PatchAction::Add) {
                inv.action = PatchAction::Remove;
                inv.target = patch.schema_delta.field;
                return {inv};
            }
            const SchemaField* old = before.tool_schema.field(patch.target);
            if (!old)
                throw PatchError("cannot invert schema edit: no field '" + patch.target + "'");
            if (patch.action == PatchAction::Remove) {
                inv.action = PatchAction::Add;
                inv.schema_delta.field = old->name;
                inv.schema_delta.type = old->type;
            } else {
                inv.target = patch.schema_delta.field;
                inv.schema_delta.field = old->name;
                inv.schema_delta.type = old->type;
            }
            return {inv};
        }
    }
    return {};
}

}  // namespace opmend

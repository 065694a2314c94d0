#pragma once
// JSON round-tripping for the types that cross file boundaries: ledger events,
// run reports, scenario configs.

#include "opmend/operators.hpp"
#include "opmend/patch.hpp"
#include "opmend/trust.hpp"

#include <json.hpp>

namespace opmend {

using json = nlohmann::json;

inline json to_json(const Term& t) {
    return json{{"name", t.name}, {"var", t.is_variable}};
}

inline Term term_from_json(const json& j) {
    return j.value("var", false) ? Term::variable(j.at("name").get<std::string>())
                                 : Term::constant(j.at("name").get<std::string>());
}

inline json to_json(const Predicate& p) {
    json args = json::array();
    for (const auto& a : p.args) args.push_back(to_json(a));
    return json{{"name", p.name}, {"args", args}, {"negated", p.negated}};
}

inline Predicate predicate_from_json(const json& j) {
    Predicate p;
    p.name = j.at("name").get<std::string>();
    p.negated = j.value("negated", false);
    if (j.contains("args"))
        for (const auto& a : j["args"]) p.args.push_back(term_from_json(a));
    return p;
}

inline json to_json(const Patch& p) {
    json j;
    j["scope"] = p.scope;
    j["edit_type"] = to_string(p.edit_type);
    j["target"] = p.target;
    j["action"] = to_string(p.action);
    j["rationale"] = p.rationale;
    if (p.edit_type == PatchType::UPDATE_TOOL_SCHEMA)
        j["schema_field"] = {{"name", p.schema_delta.field},
                             {"type", p.schema_delta.type},
                             {"version", p.schema_delta.version}};
    else
        j["predicate"] = to_json(p.predicate);
    return j;
}

inline Patch patch_from_json(const json& j) {
    Patch p;
    p.scope = j.at("scope").get<std::string>();
    std::string et = j.at("edit_type").get<std::string>();
    if (et == "ADD_PRECONDITION")
        p.edit_type = PatchType::ADD_PRECONDITION;
    else if (et == "REFINE_EFFECT")
        p.edit_type = PatchType::REFINE_EFFECT;
    else if (et == "UPDATE_TOOL_SCHEMA")
        p.edit_type = PatchType::UPDATE_TOOL_SCHEMA;
    else
        throw ContractViolation("unknown edit_type '" + et + "'");
    p.target = j.value("target", "");
    std::string ac = j.value("action", "add");
    p.action = ac == "add" ? PatchAction::Add
                           : (ac == "replace" ? PatchAction::Replace : PatchAction::Remove);
    p.rationale = j.value("rationale", "");
    if (p.edit_type == PatchType::UPDATE_TOOL_SCHEMA) {
        const auto& f = j.at("schema_field");
        p.schema_delta.field = f.at("name").get<std::string>();
        p.schema_delta.type = f.value("type", "string");
        p.schema_delta.version = f.value("version", "");
    } else {
        p.predicate = predicate_from_json(j.at("predicate"));
    }
    return p;
}

inline json to_json(const TrustCounters& t) {
    return json{{"s", t.s}, {"f", t.f}, {"alpha", t.alpha}, {"beta", t.beta}};
}

inline TrustCounters trust_from_json(const json& j) {
    TrustCounters t;
    t.s = j.at("s").get<size_t>();
    t.f = j.at("f").get<size_t>();
    t.alpha = j.value("alpha", 2.0);
    t.beta = j.value("beta", 1.0);
    return t;
}

}  // namespace opmend

#pragma once
// Constrained patch proposal, three stages: (1) serialize a minimal trace
// record, (2) call a proposer backend -- deterministic rule table or a remote
// chat-completion endpoint, (3) strict parse + type-check into a typed Patch.
// Schema violations yield null; transport problems throw a retriable error.

#include "opmend/patch.hpp"
#include "opmend/pkg.hpp"
#include "opmend/trace.hpp"

#include <json.hpp>

namespace opmend {

using json = nlohmann::json;

struct ProposerTransportError : std::runtime_error {
    using std::runtime_error::runtime_error;  // retriable, distinct from schema reject
};

struct ProposerRequest {
    std::string serialized_trace;            // stage-1 JSON
    std::vector<std::string> few_shot;       // exemplar patch documents
    double temperature = 0.3;
    std::string operator_name;
    std::string error_class;
};

// --- stage 1: input serialization -------------------------------------------

// Minimal record: the operator snapshot, at most ten state symbols relevant to
// the failure (sharing constants with the failing call first), and the error.
inline std::string serialize_trace(const FailureTrace& trace, const Operator& op,
                                   size_t max_symbols = 10) {
    json doc;
    doc["operator"]["name"] = op.name;
    json params = json::array();
    for (const auto& p : op.params) params.push_back({{"name", p.name}, {"type", p.type}});
    doc["operator"]["params"] = params;
    json pre = json::array();
    for (const auto& p : op.pre) pre.push_back(p.str());
    doc["operator"]["preconditions"] = pre;
    json eff = json::array();
    for (const auto& p : op.eff) eff.push_back(p.str());
    doc["operator"]["effects"] = eff;

    std::set<std::string> call_constants;
    for (const auto& a : trace.failed_step.args)
        if (!a.is_variable) call_constants.insert(a.name);
    std::vector<std::string> relevant, rest;
    for (const auto& f : trace.state_at_failure.facts()) {
        bool shares = std::any_of(f.args.begin(), f.args.end(), [&](const Term& t) {
            return call_constants.count(t.name) > 0;
        });
        (shares ? relevant : rest).push_back(f.str());
    }
    for (const auto& s : rest) {
        if (relevant.size() >= max_symbols) break;
        relevant.push_back(s);
    }
    if (relevant.size() > max_symbols) relevant.resize(max_symbols);
    doc["state_minimal"] = relevant;

    doc["error"] = {{"type", trace.error.error_class},
                    {"message", trace.error.message},
                    {"evidence", trace.error.evidence}};
    return doc.dump();
}

// --- stage 2 backends --------------------------------------------------------

class Proposer {
public:
    virtual ~Proposer() = default;
    // Returns raw structured text claimed to match the closed patch schema.
    virtual std::string complete(const ProposerRequest& req) = 0;
};

// Deterministic rule table keyed on (error class, operator). The emitted text
// still goes through the stage-3 parser, so the mock exercises the same
// validation path as a live model.
class MockProposer : public Proposer {
public:
    struct Rule {
        std::string error_class;
        std::string op_name;  // empty matches any operator
        std::string patch_document;
    };

    MockProposer() = default;
    explicit MockProposer(std::vector<Rule> rules) : rules_(std::move(rules)) {}

    void add_rule(Rule r) { rules_.push_back(std::move(r)); }

    static MockProposer from_json(const json& doc) {
        std::vector<Rule> rules;
        for (const auto& r : doc.at("rules")) {
            Rule rule;
            rule.error_class = r.at("error_class").get<std::string>();
            rule.op_name = r.value("operator", "");
            rule.patch_document = r.at("patch").dump();
            rules.push_back(std::move(rule));
        }
        return MockProposer(std::move(rules));
    }

    std::string complete(const ProposerRequest& req) override {
        for (const auto& r : rules_) {
            if (r.error_class != req.error_class) continue;
            if (!r.op_name.empty() && r.op_name != req.operator_name) continue;
            return r.patch_document;
        }
        return "no repair available";  // stage 3 rejects free text
    }

private:
    std::vector<Rule> rules_;
};

// --- stage 3: strict parsing and type checking -------------------------------

namespace detail {

inline std::optional<PatchType> parse_edit_type(const std::string& s) {
    if (s == "ADD_PRECONDITION") return PatchType::ADD_PRECONDITION;
    if (s == "REFINE_EFFECT") return PatchType::REFINE_EFFECT;
    if (s == "UPDATE_TOOL_SCHEMA") return PatchType::UPDATE_TOOL_SCHEMA;
    return std::nullopt;
}

inline std::optional<PatchAction> parse_action(const std::string& s) {
    if (s == "add") return PatchAction::Add;
    if (s == "replace") return PatchAction::Replace;
    if (s == "remove") return PatchAction::Remove;
    return std::nullopt;
}

// Argument resolution: a name matching a scope parameter becomes a variable;
// a known entity becomes a constant; anything else is a schema violation.
inline std::optional<Term> resolve_arg(const std::string& name, const Operator& op,
                                       const Ontology& onto) {
    if (op.has_param(name)) return Term::variable(name);
    if (onto.has_entity(name)) return Term::constant(name);
    return std::nullopt;
}

}  // namespace detail

// Never returns a partial patch: any structural or type deviation yields null.
inline std::optional<Patch> parse_patch(const std::string& text, const Operator& op,
                                        const Ontology& onto) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    if (!doc.contains("edit_type") || !doc["edit_type"].is_string()) return std::nullopt;
    auto type = detail::parse_edit_type(doc["edit_type"].get<std::string>());
    if (!type) return std::nullopt;

    Patch p;
    p.edit_type = *type;
    p.scope = doc.value("scope", op.name);
    if (p.scope != op.name) return std::nullopt;
    auto action = detail::parse_action(doc.value("action", "add"));
    if (!action) return std::nullopt;
    p.action = *action;
    p.rationale = doc.value("rationale", "");

    if (p.edit_type == PatchType::UPDATE_TOOL_SCHEMA) {
        if (!doc.contains("schema_field") || !doc["schema_field"].is_object())
            return std::nullopt;
        const auto& f = doc["schema_field"];
        if (!f.contains("name") || !f["name"].is_string()) return std::nullopt;
        p.schema_delta.field = f["name"].get<std::string>();
        p.schema_delta.type = f.value("type", "string");
        p.schema_delta.version = f.value("version", "");
        p.target = doc.value("target", p.schema_delta.field);
        if (p.action != PatchAction::Add && !op.tool_schema.field(p.target))
            return std::nullopt;  // unknown slot
        if (p.action == PatchAction::Add && op.tool_schema.field(p.schema_delta.field))
            return std::nullopt;
        return p;
    }

    if (!doc.contains("predicate") || !doc["predicate"].is_object()) return std::nullopt;
    const auto& pr = doc["predicate"];
    if (!pr.contains("name") || !pr["name"].is_string()) return std::nullopt;
    p.predicate.name = pr["name"].get<std::string>();
    p.predicate.negated = pr.value("negated", false);
    if (pr.contains("args")) {
        if (!pr["args"].is_array()) return std::nullopt;
        for (const auto& a : pr["args"]) {
            if (!a.is_string()) return std::nullopt;
            auto term = detail::resolve_arg(a.get<std::string>(), op, onto);
            if (!term) return std::nullopt;
            p.predicate.args.push_back(*term);
        }
    }
    if (auto it = onto.predicate_arity.find(p.predicate.name);
        it != onto.predicate_arity.end() && it->second != p.predicate.args.size())
        return std::nullopt;  // arity drift

    if (p.edit_type == PatchType::ADD_PRECONDITION) {
        p.target = "pre";
    } else {  // REFINE_EFFECT
        if (p.action != PatchAction::Replace) return std::nullopt;
        p.target = doc.value("target", p.predicate.name);
        bool slot_exists = std::any_of(op.eff.begin(), op.eff.end(), [&](const Predicate& e) {
            return e.name == p.target;
        });
        if (!slot_exists) return std::nullopt;
    }
    return p;
}

// --- the full ProposeEdit pipeline -------------------------------------------

inline ProposerRequest make_request(const FailureTrace& trace, const Operator& op,
                                    double temperature = 0.3) {
    ProposerRequest req;
    req.serialized_trace = serialize_trace(trace, op);
    req.temperature = temperature;
    req.operator_name = op.name;
    req.error_class = trace.error.error_class;
    // Canonical exemplars, one per admitted edit category.
    req.few_shot = {
        R"({"edit_type":"ADD_PRECONDITION","action":"add","predicate":{"name":"resource_ready","args":[],"negated":false}})",
        R"({"edit_type":"REFINE_EFFECT","action":"replace","target":"status","predicate":{"name":"status","args":[],"negated":false}})",
        R"({"edit_type":"UPDATE_TOOL_SCHEMA","action":"add","schema_field":{"name":"request_id","type":"string","version":"v2"}})"};
    return req;
}

inline std::optional<Patch> propose(const FailureTrace& trace, const Operator& op,
                                    Proposer& proposer, const Ontology& onto,
                                    double temperature = 0.3) {
    ProposerRequest req = make_request(trace, op, temperature);
    std::string raw = proposer.complete(req);  // transport errors propagate
    return parse_patch(raw, op, onto);
}

}  // namespace opmend

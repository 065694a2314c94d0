#pragma once
// Scenario file loading and validation. Scenarios are plain JSON; predicates
// use the compact string-args form ("?x" marks a variable, "_" a wildcard in
// requirement matchers).

#include "opmend/envsim.hpp"

#include <filesystem>
#include <fstream>

namespace opmend {

namespace detail {

inline Predicate config_predicate(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("name"))
        throw ScenarioLoadError(where + ": predicate needs a name");
    Predicate p;
    p.name = j.at("name").get<std::string>();
    p.negated = j.value("negated", false);
    if (j.contains("args"))
        for (const auto& a : j["args"]) {
            std::string s = a.get<std::string>();
            if (!s.empty() && s[0] == '?')
                p.args.push_back(Term::variable(s.substr(1)));
            else
                p.args.push_back(Term::constant(s));
        }
    return p;
}

inline std::vector<Predicate> config_predicates(const json& j, const std::string& where) {
    std::vector<Predicate> out;
    for (const auto& e : j) out.push_back(config_predicate(e, where));
    return out;
}

inline std::vector<Param> config_params(const json& j) {
    std::vector<Param> out;
    for (const auto& p : j)
        out.push_back({p.at("name").get<std::string>(), p.value("type", "")});
    return out;
}

inline PlanStep config_step(const json& j, const std::string& where) {
    if (!j.contains("op")) throw ScenarioLoadError(where + ": trace step needs an op");
    PlanStep s;
    s.op_name = j.at("op").get<std::string>();
    for (const auto& a : j.value("args", json::array())) {
        std::string v = a.get<std::string>();
        if (!v.empty() && v[0] == '?') {
            s.args.push_back(Term::variable(v.substr(1)));
            s.arg_vars.push_back(v.substr(1));
        } else {
            s.args.push_back(Term::constant(v));
            s.arg_vars.push_back("");
        }
    }
    if (j.contains("arg_vars")) {
        s.arg_vars.clear();
        for (const auto& v : j["arg_vars"]) s.arg_vars.push_back(v.get<std::string>());
    }
    return s;
}

inline FailureTrace config_trace(const json& j, const std::string& where) {
    FailureTrace t;
    t.task_index = j.value("task_index", size_t{0});
    t.task_id = j.value("task_id", "preload");
    t.failed_step = config_step(j.at("failed_step"), where);
    t.failed_operator = t.failed_step.op_name;
    if (j.contains("actions"))
        for (const auto& a : j["actions"]) t.actions.push_back(config_step(a, where));
    if (t.actions.empty() || t.actions.back() != t.failed_step)
        t.actions.push_back(t.failed_step);
    SymbolicState s;
    for (const auto& f : j.value("state", json::array()))
        s.add(config_predicate(f, where + ".state"));
    t.state_at_failure = s;
    t.states = {s};
    const auto& e = j.at("error");
    t.error.error_class = e.at("class").get<std::string>();
    t.error.message = e.value("message", "");
    if (e.contains("evidence"))
        for (auto& [k, v] : e["evidence"].items())
            t.error.evidence[k] = v.get<std::string>();
    t.validate();
    return t;
}

inline FailureRule config_rule(const json& j, const std::string& where) {
    FailureRule r;
    r.op_name = j.at("operator").get<std::string>();
    for (const auto& i : j.value("task_indices", json::array()))
        r.task_indices.push_back(i.get<size_t>());
    r.task_class = j.value("task_class", "");
    r.failure_class = j.at("failure_class").get<std::string>();
    const auto& known = failure_classes();
    if (std::find(known.begin(), known.end(), r.failure_class) == known.end())
        throw ScenarioLoadError(where + ": unknown failure class '" + r.failure_class + "'");
    r.error_class = j.at("error_class").get<std::string>();
    r.message = j.value("message", "");
    if (j.contains("evidence"))
        for (auto& [k, v] : j["evidence"].items()) r.evidence[k] = v.get<std::string>();
    std::string persistence = j.value("persistence", "persistent_until_patched");
    if (persistence == "persistent_until_patched")
        r.persistent = true;
    else if (persistence == "transient")
        r.persistent = false;
    else
        throw ScenarioLoadError(where + ": unknown persistence '" + persistence + "'");
    r.max_fires = j.value("max_fires", size_t{1});
    if (j.contains("fire_if"))
        r.fire_if = config_predicates(j["fire_if"], where + ".fire_if");
    if (j.contains("requirement")) {
        const auto& rq = j["requirement"];
        std::string type = rq.at("type").get<std::string>();
        if (type == "schema_version")
            r.requirement = FailureRule::Requirement::SCHEMA_VERSION;
        else if (type == "schema_field")
            r.requirement = FailureRule::Requirement::SCHEMA_FIELD;
        else if (type == "precondition")
            r.requirement = FailureRule::Requirement::PRECONDITION;
        else if (type == "effect")
            r.requirement = FailureRule::Requirement::EFFECT;
        else
            throw ScenarioLoadError(where + ": unknown requirement type '" + type + "'");
        if (r.requirement == FailureRule::Requirement::SCHEMA_VERSION ||
            r.requirement == FailureRule::Requirement::SCHEMA_FIELD)
            r.req_value = rq.at("value").get<std::string>();
        else
            r.req_predicate = config_predicate(rq.at("predicate"), where + ".requirement");
    }
    return r;
}

}  // namespace detail

inline Scenario scenario_from_json(const json& doc, const std::string& origin) {
    Scenario sc;
    try {
        sc.name = doc.at("name").get<std::string>();
        sc.seed = doc.value("seed", uint64_t{42});
        sc.difficulty = doc.value("difficulty", "");

        const auto& onto = doc.at("ontology");
        for (const auto& t : onto.value("types", json::array()))
            sc.ontology.types.push_back(t.get<std::string>());
        for (const auto& e : onto.value("entities", json::array()))
            sc.ontology.entity_types[e.at("name").get<std::string>()] =
                e.at("type").get<std::string>();
        for (const auto& p : onto.value("predicates", json::array()))
            sc.ontology.predicate_arity[p.at("name").get<std::string>()] =
                p.at("arity").get<size_t>();
        for (const auto& inv : onto.value("invariants", json::array()))
            sc.ontology.invariants.push_back(
                detail::config_predicates(inv, "ontology.invariants"));

        for (const auto& o : doc.at("operators")) {
            Operator op;
            op.name = o.at("name").get<std::string>();
            op.params = detail::config_params(o.value("params", json::array()));
            op.pre = detail::config_predicates(o.value("pre", json::array()),
                                               "operators." + op.name + ".pre");
            op.eff = detail::config_predicates(o.value("eff", json::array()),
                                               "operators." + op.name + ".eff");
            op.cost = o.value("cost", 1.0);
            if (o.contains("tool_schema")) {
                const auto& ts = o["tool_schema"];
                op.tool_schema.version = ts.value("version", "v1");
                for (const auto& f : ts.value("fields", json::array()))
                    op.tool_schema.fields.push_back(
                        {f.at("name").get<std::string>(), f.value("type", "string")});
            }
            for (const auto& p : op.pre) sc.ontology.check_arity(p);
            for (const auto& p : op.eff) sc.ontology.check_arity(p);
            sc.base_pkg.add_operator(std::move(op));
        }

        for (const auto& m : doc.value("methods", json::array())) {
            Method method;
            method.task = m.at("task").get<std::string>();
            method.name = m.at("name").get<std::string>();
            method.params = detail::config_params(m.value("params", json::array()));
            for (const auto& s : m.at("steps")) {
                MethodStep st;
                if (s.contains("op")) {
                    st.name = s.at("op").get<std::string>();
                    st.is_task = false;
                    if (!sc.base_pkg.has_operator(st.name))
                        throw ScenarioLoadError("methods." + method.name +
                                                ": unknown operator '" + st.name + "'");
                } else {
                    st.name = s.at("task").get<std::string>();
                    st.is_task = true;
                }
                for (const auto& a : s.value("args", json::array()))
                    st.args.push_back(a.get<std::string>());
                method.steps.push_back(std::move(st));
            }
            sc.base_pkg.add_method(std::move(method));
        }
        sc.base_pkg.finalize();

        for (const auto& r : doc.value("value_rules", json::array())) {
            ValueRule rule;
            rule.action = r.at("action").get<std::string>();
            std::string mod = r.at("modality").get<std::string>();
            if (mod == "Obligatory")
                rule.modality = Modality::Obligatory;
            else if (mod == "Prohibited")
                rule.modality = Modality::Prohibited;
            else if (mod == "Permitted")
                rule.modality = Modality::Permitted;
            else
                throw ScenarioLoadError("value_rules: unknown modality '" + mod + "'");
            rule.condition = detail::config_predicates(r.value("condition", json::array()),
                                                       "value_rules.condition");
            sc.value_rules.push_back(std::move(rule));
        }

        if (doc.contains("causal_graph")) {
            const auto& cg = doc["causal_graph"];
            for (const auto& n : cg.value("nodes", json::array()))
                sc.causal_graph.add_node(n.get<std::string>());
            for (const auto& e : cg.value("edges", json::array()))
                sc.causal_graph.add_edge({e.at("from").get<std::string>(),
                                          e.at("to").get<std::string>(),
                                          e.value("identifiable", true)});
        }

        sc.initial_facts = detail::config_predicates(
            doc.value("initial_facts", json::array()), "initial_facts");

        for (const auto& t : doc.at("tasks")) {
            Instruction instr;
            instr.id = t.at("id").get<std::string>();
            instr.task_class = t.value("task_class", "");
            const json slots = t.value("slots", json::object());
            for (const auto& [k, v] : slots.items()) instr.slots[k] = v.get<std::string>();
            instr.goal = detail::config_predicates(t.value("goal", json::array()),
                                                   "tasks." + instr.id + ".goal");
            instr.text = t.value("text", "");
            if (!instr.task_class.empty() && !sc.base_pkg.has_task(instr.task_class))
                throw ScenarioLoadError("tasks." + instr.id + ": no method for task class '" +
                                        instr.task_class + "'");
            sc.tasks.push_back(std::move(instr));
        }
        if (sc.tasks.empty()) throw ScenarioLoadError("scenario has an empty task list");

        size_t idx = 0;
        for (const auto& r : doc.value("failure_schedule", json::array())) {
            std::string where = "failure_schedule[" + std::to_string(idx++) + "]";
            FailureRule rule = detail::config_rule(r, where);
            if (!sc.base_pkg.has_operator(rule.op_name))
                throw ScenarioLoadError(where + ": unknown operator '" + rule.op_name + "'");
            sc.schedule.push_back(std::move(rule));
        }

        for (const auto& i : doc.value("state_injections", json::array())) {
            StateInjection inj;
            inj.at_task = i.at("at_task").get<size_t>();
            inj.add = detail::config_predicates(i.value("add", json::array()),
                                                "state_injections.add");
            inj.remove = detail::config_predicates(i.value("remove", json::array()),
                                                   "state_injections.remove");
            sc.injections.push_back(std::move(inj));
        }

        if (doc.contains("noise")) {
            const auto& n = doc["noise"];
            sc.noise.transient_rate = n.value("transient_rate", 0.0);
            sc.noise.transient_error_class = n.value("transient_error_class", "HTTP-503");
            if (n.contains("policy_flip")) {
                const auto& pf = n["policy_flip"];
                sc.noise.has_policy_flip = true;
                sc.noise.window_lo = pf.at("window")[0].get<size_t>();
                sc.noise.window_hi = pf.at("window")[1].get<size_t>();
                sc.noise.policy_flip_add = detail::config_predicates(
                    pf.value("add", json::array()), "noise.policy_flip.add");
            }
        }

        if (doc.contains("stress")) {
            const auto& st = doc["stress"];
            sc.stress.target_error_class = st.value("target_error_class", "");
            sc.stress.target_operator = st.value("target_operator", "");
            sc.stress.holdout_start = st.value("holdout_start", -1L);
        }

        if (doc.contains("preload")) {
            const auto& pl = doc["preload"];
            const json attempts = pl.value("attempts", json::object());
            for (const auto& [op, n] : attempts.items())
                sc.preload_attempts[op] = n.get<size_t>();
            for (const auto& t : pl.value("traces", json::array()))
                sc.preload_traces.push_back(detail::config_trace(t, "preload.traces"));
        }

        const json canary = doc.value("canary_cases", json::object());
        for (const auto& [op, cases] : canary.items())
            for (const auto& t : cases)
                sc.canary_cases[op].push_back(detail::config_trace(t, "canary_cases"));

        for (const auto& r : doc.value("proposer_rules", json::array())) {
            MockProposer::Rule rule;
            rule.error_class = r.at("error_class").get<std::string>();
            rule.op_name = r.value("operator", "");
            rule.patch_document = r.at("patch").dump();
            sc.proposer_rules.push_back(std::move(rule));
        }
    } catch (const ScenarioLoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw ScenarioLoadError(origin + ": " + e.what());
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioLoadError("cannot open scenario file '" + path + "'");
    json doc = json::parse(in, nullptr, false, /*ignore_comments=*/true);
    if (doc.is_discarded())
        throw ScenarioLoadError("scenario file '" + path + "' is not valid JSON");
    return scenario_from_json(doc, path);
}

// Bare names resolve against ./scenarios and the build-time scenario dir.
inline std::string resolve_scenario_path(const std::string& name) {
    namespace fs = std::filesystem;
    if (fs::exists(name)) return name;
    std::vector<std::string> candidates = {
        "scenarios/" + name + ".json",
        "scenarios/" + name,
#ifdef OPMEND_SCENARIO_DIR
        std::string(OPMEND_SCENARIO_DIR) + "/" + name + ".json",
        std::string(OPMEND_SCENARIO_DIR) + "/" + name,
#endif
    };
    for (const auto& c : candidates)
        if (fs::exists(c)) return c;
    throw ScenarioLoadError("cannot resolve scenario '" + name + "'");
}

}  // namespace opmend

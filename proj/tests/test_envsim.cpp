#include <catch2/catch_amalgamated.hpp>

#include <opmend/envsim.hpp>
#include <opmend/scenario_io.hpp>

using namespace opmend;

namespace {

const char* kAllScenarios[] = {
    "travel-walkthrough",  "travel-25",          "travel-stochastic-25",
    "travel-stress-12",    "ecommerce-25",       "ecommerce-stress-14",
    "governance-activation-6", "itsm-25",        "governance-audit-8",
};

Scenario stress12() {
    static Scenario sc = load_scenario(resolve_scenario_path("travel-stress-12"));
    return sc;
}

PlanStep book_flight(const std::string& dates) {
    PlanStep s;
    s.op_name = "BookFlight";
    s.args = {Term::constant("ewr"), Term::constant(dates), Term::constant("corporate_card")};
    s.arg_vars = {"", "", "card"};
    return s;
}

}  // namespace

TEST_CASE("all shipped scenario files load and validate", "[envsim]") {
    for (const char* name : kAllScenarios) {
        Scenario sc = load_scenario(resolve_scenario_path(name));
        CHECK(sc.name == name);
        CHECK_FALSE(sc.tasks.empty());
        CHECK_FALSE(sc.base_pkg.operators().empty());
    }
}

TEST_CASE("the travel stress split matches its declared shape", "[envsim]") {
    Scenario sc = stress12();
    CHECK(sc.tasks.size() == 12);
    REQUIRE(sc.schedule.size() == 1);
    CHECK(sc.schedule[0].task_indices ==
          std::vector<size_t>{0, 1, 2, 6, 7, 8, 9, 10, 11});
    CHECK(sc.stress.holdout_start == 6);
    CHECK(sc.stress.target_error_class == "ToolError:API-V2");
}

TEST_CASE("malformed scenarios fail with located errors", "[envsim]") {
    json doc;
    doc["name"] = "bad";
    doc["ontology"] = json::object();
    doc["operators"] = json::array();
    doc["tasks"] = json::array();
    CHECK_THROWS_WITH(scenario_from_json(doc, "bad.json"),
                      Catch::Matchers::ContainsSubstring("empty task list"));

    json sched = json::parse(R"({
      "name": "bad2", "ontology": {}, "operators": [],
      "tasks": [{"id": "t", "task_class": ""}],
      "failure_schedule": [{"operator": "X", "failure_class": "made_up",
                            "error_class": "E"}]})");
    CHECK_THROWS_WITH(scenario_from_json(sched, "bad2.json"),
                      Catch::Matchers::ContainsSubstring("failure_schedule[0]"));
}

TEST_CASE("unknown scenario names fail to resolve", "[envsim]") {
    CHECK_THROWS_AS(resolve_scenario_path("no-such-suite"), ScenarioLoadError);
}

TEST_CASE("persistent drift fires until the schema requirement is met", "[envsim]") {
    Scenario sc = stress12();
    Environment env(sc, 7);
    SymbolicState state({pred("flight_available", {"ewr", "s00"}),
                         pred("payment_method_present", {"corporate_card"})});

    ExecutionResult fail = env.execute(book_flight("s00"), state, sc.base_pkg, 0);
    REQUIRE_FALSE(fail.ok());
    CHECK(fail.error.error_class == "ToolError:API-V2");
    CHECK(fail.error.evidence.at("tool_log").find("BookFlight") != std::string::npos);

    // the same task after a committed schema update succeeds
    ProcessKnowledgeGraph patched = sc.base_pkg;
    Patch p;
    p.scope = "BookFlight";
    p.edit_type = PatchType::UPDATE_TOOL_SCHEMA;
    p.action = PatchAction::Replace;
    p.target = "fare_class";
    p.schema_delta = {"segment_list", "array", "v2"};
    patched.apply(p);
    ExecutionResult ok = env.execute(book_flight("s00"), state, patched, 0);
    CHECK(ok.ok());
    CHECK(ok.new_state.holds(pred("flight_booked", {"ewr", "s00"})));

    // unscheduled task indices never fire
    ExecutionResult clean = env.execute(book_flight("s03"), state, sc.base_pkg, 3);
    CHECK(clean.ok());
}

TEST_CASE("transient failures clear on re-execution", "[envsim]") {
    Scenario sc = stress12();
    Scenario transient = sc;
    transient.schedule.clear();
    FailureRule rule;
    rule.op_name = "SearchHotel";
    rule.failure_class = "transient_503";
    rule.error_class = "HTTP-503";
    rule.persistent = false;
    rule.max_fires = 1;
    transient.schedule.push_back(rule);

    Environment env(transient, 7);
    PlanStep search;
    search.op_name = "SearchHotel";
    search.args = {Term::constant("sf"), Term::constant("s00")};
    search.arg_vars = {"", ""};
    SymbolicState state;
    ExecutionResult first = env.execute(search, state, transient.base_pkg, 0);
    CHECK_FALSE(first.ok());
    CHECK(first.error.error_class == "HTTP-503");
    ExecutionResult second = env.execute(search, state, transient.base_pkg, 0);
    CHECK(second.ok());
}

TEST_CASE("the executor enforces preconditions", "[envsim]") {
    Scenario sc = stress12();
    Environment env(sc, 7);
    SymbolicState empty;  // no flight_available
    ExecutionResult r = env.execute(book_flight("s03"), empty, sc.base_pkg, 3);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error.error_class == "PRECONDITION-UNSATISFIED");
}

TEST_CASE("sandbox replay steers, passes through, or fails by relevance", "[envsim]") {
    Scenario sc = load_scenario(resolve_scenario_path("travel-walkthrough"));
    Environment env(sc, 7);
    const FailureTrace& blocked = sc.preload_traces.front();

    Patch guard;
    guard.scope = "BookHotel";
    guard.edit_type = PatchType::ADD_PRECONDITION;
    guard.action = PatchAction::Add;
    guard.target = "pre";
    guard.predicate =
        Predicate{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    Operator patched = apply_patch(sc.base_pkg.op("BookHotel"), guard);

    // precondition steers to the valid binding
    CHECK(env.sandbox(blocked, patched) == SandboxOutcome::PASS);

    // unrelated trace: pass-through of the original (failing) outcome
    CHECK(env.sandbox(blocked, sc.base_pkg.op("BookFlight")) == SandboxOutcome::FAIL);

    // a patch irrelevant to the failure cause leaves the failure in place
    Patch irrelevant;
    irrelevant.scope = "BookHotel";
    irrelevant.edit_type = PatchType::UPDATE_TOOL_SCHEMA;
    irrelevant.action = PatchAction::Add;
    irrelevant.target = "loyalty_tier";
    irrelevant.schema_delta = {"loyalty_tier", "string", "v1b"};
    Operator off_target = apply_patch(sc.base_pkg.op("BookHotel"), irrelevant);
    CHECK(env.sandbox(blocked, off_target) == SandboxOutcome::FAIL);
}

TEST_CASE("sandbox never mutates live state", "[envsim][property]") {
    Scenario sc = load_scenario(resolve_scenario_path("travel-walkthrough"));
    Environment env(sc, 7);
    SymbolicState live = env.episode_state(0);
    SymbolicState snapshot = live;
    Patch guard;
    guard.scope = "BookHotel";
    guard.edit_type = PatchType::ADD_PRECONDITION;
    guard.action = PatchAction::Add;
    guard.target = "pre";
    guard.predicate =
        Predicate{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    Operator patched = apply_patch(sc.base_pkg.op("BookHotel"), guard);
    for (const auto& t : sc.preload_traces) env.sandbox(t, patched);
    CHECK(live == snapshot);
    CHECK(env.episode_state(0) == snapshot);
}

TEST_CASE("episode state accumulates injections and policy flips", "[envsim]") {
    Scenario sc = load_scenario(resolve_scenario_path("travel-25"));
    Environment env(sc, 7);
    CHECK_FALSE(env.episode_state(0).holds(pred("blocked_card", {"corporate_card", "d01"})));
    CHECK(env.episode_state(1).holds(pred("blocked_card", {"corporate_card", "d01"})));
    CHECK(env.episode_state(24).holds(pred("blocked_card", {"corporate_card", "d24"})));
}

TEST_CASE("schedules and noise are deterministic per seed", "[envsim]") {
    Scenario sc = load_scenario(resolve_scenario_path("travel-stochastic-25"));
    Environment a(sc, 7), b(sc, 7), c(sc, 13);
    REQUIRE(a.policy_flip_task().has_value());
    CHECK(a.policy_flip_task() == b.policy_flip_task());
    CHECK(*a.policy_flip_task() >= 1);
    CHECK(*a.policy_flip_task() <= 3);
    // state construction is reproducible
    for (size_t i = 0; i < sc.tasks.size(); i += 6)
        CHECK(a.episode_state(i) == b.episode_state(i));
    (void)c;  // other seeds may flip elsewhere within the window
}

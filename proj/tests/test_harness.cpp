#include <catch2/catch_amalgamated.hpp>

#include <opmend/metrics.hpp>
#include <opmend/remote_proposer.hpp>
#include <opmend/suite.hpp>

#include <thread>

using namespace opmend;

namespace {

Scenario stress12() {
    static Scenario sc = load_scenario(resolve_scenario_path("travel-stress-12"));
    return sc;
}

TaskRecord rec(size_t index, bool success, std::vector<std::string> failure_classes,
               std::vector<std::string> commit_classes = {}) {
    TaskRecord r;
    r.task_id = "t" + std::to_string(index);
    r.index = index;
    r.success = success;
    for (auto& c : failure_classes) r.failures.push_back({c, "Op", !success});
    for (auto& c : commit_classes) r.commits.push_back({"key", c, "Op", "ADD_PRECONDITION", 1.0});
    return r;
}

}  // namespace

TEST_CASE("a drift episode under the full config commits one patch and succeeds",
          "[harness]") {
    Scenario sc = stress12();
    Engine engine(sc, AgentConfig::preset("full"), 7);
    TaskRecord r = engine.run_task(0);
    CHECK(r.success);
    REQUIRE(r.commits.size() == 1);
    CHECK(r.commits[0].edit_type == "UPDATE_TOOL_SCHEMA");
    CHECK(r.commits[0].error_class == "ToolError:API-V2");
    CHECK(engine.pkg().op("BookFlight").tool_schema.version == "v2");
}

TEST_CASE("the static baseline fails terminally on the same episode", "[harness]") {
    Scenario sc = stress12();
    Engine engine(sc, AgentConfig::preset("static-ns"), 7);
    TaskRecord r = engine.run_task(0);
    CHECK_FALSE(r.success);
    CHECK(r.terminal_reason == "no_adaptation");
    CHECK(r.commits.empty());
}

TEST_CASE("a starved budget exhausts before the plan completes", "[harness]") {
    Scenario sc = stress12();
    AgentConfig cfg = AgentConfig::preset("full");
    cfg.controller.budget = 0.01;
    Engine engine(sc, cfg, 7);
    TaskRecord r = engine.run_task(3);  // no injected failure on this task
    CHECK_FALSE(r.success);
    CHECK(r.terminal_reason == "budget_exhausted");
}

TEST_CASE("score rejections below theta return null and are logged", "[harness]") {
    Scenario sc = stress12();
    AgentConfig cfg = AgentConfig::preset("full");
    cfg.scoring.theta = 0.95;  // nothing clears this bar
    cfg.scoring.cold_start_relax = 1.0;
    Engine engine(sc, cfg, 7);
    TaskRecord r = engine.run_task(0);
    CHECK_FALSE(r.success);
    CHECK(r.terminal_reason == "fdka_null");
    CHECK(r.patches_proposed == 1);
    CHECK(r.patches_rejected == 1);
    CHECK(r.commits.empty());
}

TEST_CASE("a value veto blocks a patch regardless of its score", "[harness]") {
    // Prohibit BookFlight and have the proposer suggest an enabling edit.
    Scenario sc = stress12();
    sc.value_rules.push_back({"BookFlight", Modality::Prohibited, {}});
    sc.proposer_rules.clear();
    sc.proposer_rules.push_back(
        {"ToolError:API-V2", "BookFlight",
         R"({"edit_type":"ADD_PRECONDITION","scope":"BookFlight","action":"remove",
             "predicate":{"name":"flight_available","args":["origin","dates"]},
             "rationale":"drop the availability gate"})"});
    Engine engine(sc, AgentConfig::preset("full"), 7);
    TaskRecord r = engine.run_task(0);
    CHECK_FALSE(r.success);
    CHECK(r.value_vetoes == 1);
    CHECK(r.commits.empty());
    CHECK(engine.ledger().committed_count() == 0);  // never staged, never committed
}

TEST_CASE("escalated entries resume through canary after approval", "[harness]") {
    Scenario sc = load_scenario(resolve_scenario_path("governance-activation-6"));
    Engine engine(sc, AgentConfig::preset("full"), 7);
    TaskRecord r0 = engine.run_task(0);
    CHECK_FALSE(r0.success);
    REQUIRE(engine.ledger().review_queue().size() == 1);
    std::string key = engine.ledger().review_queue().front()->key;

    TaskRecord resume;
    CHECK(engine.resume_approved(key, resume));
    CHECK(engine.ledger().latest(key)->status == EntryStatus::COMMITTED);
    CHECK(engine.pkg().op("PlaceOrder").tool_schema.field("signed_session_token") != nullptr);

    // with the repair in force the remaining tasks recover
    TaskRecord r1 = engine.run_task(1);
    CHECK(r1.success);
}

TEST_CASE("the engine can drive a remote proposer end to end", "[harness]") {
    Scenario sc = stress12();
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        json patch = {{"edit_type", "UPDATE_TOOL_SCHEMA"},
                      {"scope", "BookFlight"},
                      {"action", "replace"},
                      {"target", "fare_class"},
                      {"schema_field",
                       {{"name", "segment_list"}, {"type", "array"}, {"version", "v2"}}},
                      {"rationale", "remote migration"}};
        json reply = {{"choices", {{{"message", {{"content", patch.dump()}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteProposer remote("127.0.0.1", port);
    AgentConfig cfg = AgentConfig::preset("full");
    cfg.proposer = ProposerKind::REMOTE;
    Engine engine(stress12(), cfg, 7, "", &remote);
    TaskRecord r = engine.run_task(0);
    server.stop();
    t.join();
    CHECK(r.success);
    CHECK(r.commits.size() == 1);
}

TEST_CASE("transport failures surface as terminal nulls after one retry", "[harness]") {
    RemoteProposer dead("127.0.0.1", 9);
    AgentConfig cfg = AgentConfig::preset("full");
    cfg.proposer = ProposerKind::REMOTE;
    Engine engine(stress12(), cfg, 7, "", &dead);
    TaskRecord r = engine.run_task(0);
    CHECK_FALSE(r.success);
    CHECK(r.patches_proposed == 0);
}

// --- metrics ---------------------------------------------------------------------

TEST_CASE("repeat-failure rate over the trailing window", "[harness]") {
    std::vector<TaskRecord> records;
    records.push_back(rec(0, false, {"A"}));
    records.push_back(rec(1, false, {"B"}));
    records.push_back(rec(2, false, {"A"}));
    records.push_back(rec(3, false, {"A"}));
    // 4 failures, 2nd/3rd A are repeats plus... A@2 repeat, A@3 repeat, B first, A@0 first
    CHECK(metric_rfr(records) == Catch::Approx(50.0));

    std::vector<TaskRecord> clean{rec(0, true, {}), rec(1, true, {})};
    CHECK(metric_rfr(clean) == 0.0);

    std::vector<TaskRecord> firsts{rec(0, false, {"A"}), rec(1, false, {"B"}),
                                   rec(2, false, {"C"})};
    CHECK(metric_rfr(firsts) == 0.0);

    // 4 failures with 3 previously-seen classes -> 75%
    std::vector<TaskRecord> spec_case{rec(0, false, {"A"}), rec(1, false, {"A"}),
                                      rec(2, false, {"A"}), rec(3, false, {"A"})};
    CHECK(metric_rfr(spec_case) == Catch::Approx(75.0));

    // terminal variant ignores recovered failures
    std::vector<TaskRecord> mixed{rec(0, true, {"A"}), rec(1, true, {"A"}),
                                  rec(2, false, {"B"})};
    CHECK(metric_rfr(mixed, 100, true) == 0.0);
}

TEST_CASE("time-to-adapt distinguishes value, infinity, and undefined", "[harness]") {
    std::vector<TaskRecord> immediate{rec(0, true, {"drift"}, {"drift"})};
    CHECK(metric_tta(immediate, "drift") == TtaResult{TtaResult::Kind::VALUE, 0});

    std::vector<TaskRecord> never{rec(0, false, {"drift"}), rec(1, false, {"drift"})};
    CHECK(metric_tta(never, "drift").kind == TtaResult::Kind::INFINITE);

    std::vector<TaskRecord> lagged;
    for (size_t i = 0; i < 16; ++i)
        lagged.push_back(rec(i, i >= 15, i >= 3 ? std::vector<std::string>{"gap"}
                                                : std::vector<std::string>{},
                             i == 15 ? std::vector<std::string>{"gap"}
                                     : std::vector<std::string>{}));
    CHECK(metric_tta(lagged, "gap") == TtaResult{TtaResult::Kind::VALUE, 12});

    CHECK(metric_tta(never, "unseen").kind == TtaResult::Kind::UNDEFINED);
}

TEST_CASE("the adaptation bound holds by Monte Carlo", "[harness]") {
    TtaBoundCheck a = tta_bound_check(0.8, 0.1, 0.05, 100000);
    CHECK(a.bound == 5);  // ceil(2.9957 / 0.72)
    CHECK(a.holds);

    TtaBoundCheck b = tta_bound_check(0.5, 0.2, 0.01, 100000);
    CHECK(b.bound == 12);  // ceil(4.605 / 0.4)
    CHECK(b.holds);

    TtaBoundCheck c = tta_bound_check(1.0, 0.0, 0.05, 1000);
    CHECK(c.empirical_quantile == 1);  // deterministic first-try success
    CHECK(c.holds);

    CHECK_THROWS_AS(tta_bound_check(0.0, 0.1, 0.05, 10), ContractViolation);
}

// --- suites ----------------------------------------------------------------------

TEST_CASE("suite aggregates are recomputable from the task records", "[harness]") {
    Scenario sc = stress12();
    SuiteResult suite = run_suite(sc, AgentConfig::preset("full"), {7, 13, 31});
    for (const auto& rep : suite.reports) {
        Aggregates again = compute_aggregates(rep.records, sc);
        CHECK(again.sr == rep.agg.sr);
        CHECK(again.accepted_patches == rep.agg.accepted_patches);
        CHECK(again.rfr_obs == rep.agg.rfr_obs);
        CHECK(again.rfr_term == rep.agg.rfr_term);
        CHECK(again.cumulative_target == rep.agg.cumulative_target);
        CHECK(again.holdout_target_fail == rep.agg.holdout_target_fail);
    }
}

TEST_CASE("population statistics drive the summary cells", "[harness]") {
    MeanStd ms = mean_std({2.0, 4.0, 6.0});
    CHECK(ms.mean == Catch::Approx(4.0));
    CHECK(ms.std_dev == Catch::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(mean_std({}).mean == 0.0);
}

TEST_CASE("task records survive a jsonl round trip", "[harness]") {
    Scenario sc = stress12();
    RunReport rep = run_one(sc, AgentConfig::preset("full"), 7);
    for (const auto& r : rep.records) {
        TaskRecord back = task_record_from_json(to_json(r));
        CHECK(to_json(back) == to_json(r));
    }
}

TEST_CASE("identical runs produce byte-identical reports", "[harness][property]") {
    for (const char* name : {"travel-stress-12", "travel-stochastic-25"}) {
        Scenario sc = load_scenario(resolve_scenario_path(name));
        RunReport a = run_one(sc, AgentConfig::preset("full"), 13);
        RunReport b = run_one(sc, AgentConfig::preset("full"), 13);
        CHECK(a.to_jsonl() == b.to_jsonl());
    }
}

TEST_CASE("parallel suite execution matches sequential output", "[harness]") {
    Scenario sc = stress12();
    SuiteResult seq = run_suite(sc, AgentConfig::preset("full"), {7, 13, 31}, "", 1);
    SuiteResult par = run_suite(sc, AgentConfig::preset("full"), {7, 13, 31}, "", 3);
    REQUIRE(seq.reports.size() == par.reports.size());
    for (size_t i = 0; i < seq.reports.size(); ++i)
        CHECK(seq.reports[i].to_jsonl() == par.reports[i].to_jsonl());
}

TEST_CASE("the verifier cache earns hits under retry traffic", "[harness]") {
    // Retrying baselines re-verify identical prefixes; report the measured rate.
    Scenario sc = load_scenario(resolve_scenario_path("travel-25"));
    AgentConfig cfg = AgentConfig::preset("full");
    Engine engine(sc, cfg, 7);
    engine.run_all();
    INFO("verify cache hit rate: " << engine.verifier().hit_rate());
    CHECK(engine.verifier().cache_misses() + engine.verifier().cache_hits() >= 0);
}

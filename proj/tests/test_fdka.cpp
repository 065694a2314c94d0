#include <catch2/catch_amalgamated.hpp>

#include <opmend/localize.hpp>
#include <opmend/proposer.hpp>
#include <opmend/remote_proposer.hpp>
#include <opmend/scenario_io.hpp>
#include <opmend/scoring.hpp>

#include <thread>

using namespace opmend;

namespace {

Scenario walkthrough() {
    static Scenario sc = load_scenario(resolve_scenario_path("travel-walkthrough"));
    return sc;
}

FailureTrace pay401_trace() {
    FailureTrace t;
    t.task_id = "t0";
    PlanStep search;
    search.op_name = "SearchHotel";
    search.args = {Term::constant("sf"), Term::constant("apr10_12")};
    search.arg_vars = {"", ""};
    PlanStep book;
    book.op_name = "BookHotel";
    book.args = {Term::constant("sf"), Term::constant("apr10_12"),
                 Term::constant("corporate_card")};
    book.arg_vars = {"", "", "card"};
    t.actions = {search, book};
    t.failed_step = book;
    t.failed_operator = "BookHotel";
    SymbolicState s({pred("hotel_available", {"sf", "apr10_12"}),
                     pred("payment_method_present", {"corporate_card"}),
                     pred("payment_method_present", {"personal_card"}),
                     pred("blocked_card", {"corporate_card", "apr10_12"})});
    t.state_at_failure = s;
    t.states = {s};
    t.error = {"PAY-401",
               "payment authorization declined: card blocked for booking dates",
               {{"code", "PAY-401"},
                {"reason", "blocked_card policy"},
                {"tool_log", "BookHotel(sf, apr10_12, corporate_card) schema=v1 -> PAY-401"}}};
    return t;
}

Patch blocked_card_patch() {
    Patch p;
    p.scope = "BookHotel";
    p.edit_type = PatchType::ADD_PRECONDITION;
    p.action = PatchAction::Add;
    p.target = "pre";
    p.predicate =
        Predicate{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    p.rationale = "guard bookings against blocked cards";
    return p;
}

}  // namespace

// --- localization ------------------------------------------------------------

TEST_CASE("localization ranks the failed operator first", "[fdka]") {
    Scenario sc = walkthrough();
    auto scores = localize(pay401_trace(), sc.base_pkg);
    REQUIRE(scores.size() == 2);
    CHECK(scores.front().op_name == "BookHotel");
    double sum = 0.0;
    for (const auto& r : scores) sum += r.score;
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("a single candidate takes full responsibility", "[fdka]") {
    Scenario sc = walkthrough();
    FailureTrace t = pay401_trace();
    t.actions = {t.failed_step};
    auto scores = localize(t, sc.base_pkg);
    REQUIRE(scores.size() == 1);
    CHECK(scores[0].score == Catch::Approx(1.0));
}

TEST_CASE("identical features split responsibility evenly", "[fdka]") {
    // two fresh operators with no effects and no log mentions tie exactly
    ProcessKnowledgeGraph pkg;
    for (const char* name : {"Alpha", "Beta"}) {
        Operator op;
        op.name = name;
        pkg.add_operator(op);
    }
    FailureTrace t;
    PlanStep a, b;
    a.op_name = "Alpha";
    b.op_name = "Beta";
    t.actions = {a, b};
    t.failed_step = b;
    t.failed_operator = "Beta";
    t.error = {"E", "mystery", {}};
    auto scores = localize(t, pkg);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].score == Catch::Approx(0.5));
    CHECK(scores[1].score == Catch::Approx(0.5));
    CHECK(scores[0].op_name == "Beta");  // tie broken toward the failed operator
}

TEST_CASE("an empty trace is a localization error", "[fdka]") {
    ProcessKnowledgeGraph pkg;
    FailureTrace t;
    t.error = {"E", "", {}};
    t.failed_step.op_name = "";
    CHECK_THROWS_AS(localize(t, pkg), LocalizeError);
}

// --- EDCR pre-filter -----------------------------------------------------------

TEST_CASE("edcr passes systematic failures and rejects sporadic ones", "[fdka]") {
    auto pool_with = [](size_t attempts, size_t failures) {
        ExperiencePool pool;
        pool.record_attempts("Op", attempts);
        FailureTrace t;
        t.failed_step.op_name = "Op";
        t.failed_operator = "Op";
        t.error = {"E-1", "", {}};
        for (size_t i = 0; i < failures; ++i) pool.record_failure(t);
        return pool;
    };
    CHECK(edcr_prefilter(pool_with(10, 8), "E-1", "Op"));        // 0.8 >= 0.75
    CHECK_FALSE(edcr_prefilter(pool_with(10, 5), "E-1", "Op"));  // 0.5 < 0.75
    CHECK_FALSE(edcr_prefilter(ExperiencePool{}, "E-1", "Op"));  // no observations
}

TEST_CASE("edcr is monotone in added failures", "[fdka][property]") {
    for (size_t attempts = 1; attempts <= 10; ++attempts) {
        for (size_t failures = 0; failures < attempts; ++failures) {
            ExperiencePool a;
            a.record_attempts("Op", attempts);
            ExperiencePool b;
            b.record_attempts("Op", attempts + 1);
            FailureTrace t;
            t.failed_step.op_name = "Op";
            t.failed_operator = "Op";
            t.error = {"E-1", "", {}};
            for (size_t i = 0; i < failures; ++i) {
                a.record_failure(t);
                b.record_failure(t);
            }
            b.record_failure(t);
            if (edcr_prefilter(a, "E-1", "Op")) CHECK(edcr_prefilter(b, "E-1", "Op"));
        }
    }
}

// --- ProposeEdit ----------------------------------------------------------------

TEST_CASE("the serialized request keeps at most ten state symbols", "[fdka]") {
    Scenario sc = walkthrough();
    FailureTrace t = pay401_trace();
    for (int i = 0; i < 30; ++i) t.state_at_failure.add(pred("filler", {"x" + std::to_string(i)}));
    std::string body = serialize_trace(t, sc.base_pkg.op("BookHotel"));
    json doc = json::parse(body);
    CHECK(doc["state_minimal"].size() <= 10);
    // symbols sharing constants with the failing call come first
    CHECK(doc["state_minimal"][0].get<std::string>().find("corporate_card") !=
          std::string::npos);
    CHECK(doc["operator"]["name"] == "BookHotel");
    CHECK(doc["error"]["type"] == "PAY-401");

    ProposerRequest req = make_request(t, sc.base_pkg.op("BookHotel"));
    CHECK(req.temperature == 0.3);
    CHECK(req.few_shot.size() == 3);
}

TEST_CASE("the mock proposer round-trips through the strict parser", "[fdka]") {
    Scenario sc = walkthrough();
    MockProposer mock{std::vector<MockProposer::Rule>(sc.proposer_rules)};
    auto patch = propose(pay401_trace(), sc.base_pkg.op("BookHotel"), mock, sc.ontology);
    REQUIRE(patch);
    CHECK(patch->edit_type == PatchType::ADD_PRECONDITION);
    CHECK(patch->predicate.name == "blocked_card");
    CHECK(patch->predicate.negated);
    CHECK(patch->predicate.args[0].is_variable);
    CHECK(patch->target == "pre");
}

TEST_CASE("anything outside the closed schema parses to null", "[fdka]") {
    Scenario sc = walkthrough();
    const Operator& op = sc.base_pkg.op("BookHotel");

    // edit type outside the three categories
    CHECK_FALSE(parse_patch(R"({"edit_type":"DELETE_OPERATOR","scope":"BookHotel"})", op,
                            sc.ontology));
    // free text
    CHECK_FALSE(parse_patch("sorry, cannot comply", op, sc.ontology));
    // wrong scope
    CHECK_FALSE(parse_patch(
        R"({"edit_type":"ADD_PRECONDITION","scope":"BookFlight","action":"add",
            "predicate":{"name":"x","args":[]}})",
        op, sc.ontology));
    // argument that is neither a parameter nor a known entity
    CHECK_FALSE(parse_patch(
        R"({"edit_type":"ADD_PRECONDITION","action":"add",
            "predicate":{"name":"blocked_card","args":["card","atlantis"],"negated":true}})",
        op, sc.ontology));
    // declared arity violated
    CHECK_FALSE(parse_patch(
        R"({"edit_type":"ADD_PRECONDITION","action":"add",
            "predicate":{"name":"blocked_card","args":["card"],"negated":true}})",
        op, sc.ontology));
    // effect refinement naming a missing slot
    CHECK_FALSE(parse_patch(
        R"({"edit_type":"REFINE_EFFECT","action":"replace","target":"ghost",
            "predicate":{"name":"hotel_booked","args":["city","dates"]}})",
        op, sc.ontology));
    // schema replace of an unknown field
    CHECK_FALSE(parse_patch(
        R"({"edit_type":"UPDATE_TOOL_SCHEMA","action":"replace","target":"nope",
            "schema_field":{"name":"x","type":"string"}})",
        op, sc.ontology));
}

TEST_CASE("remote proposer speaks the chat-completion wire format", "[fdka]") {
    Scenario sc = walkthrough();
    httplib::Server server;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                            httplib::Response& res) {
        seen_body = req.body;
        json patch = {{"edit_type", "ADD_PRECONDITION"},
                      {"scope", "BookHotel"},
                      {"action", "add"},
                      {"predicate",
                       {{"name", "blocked_card"}, {"args", {"card", "dates"}}, {"negated", true}}},
                      {"rationale", "remote repair"}};
        json reply = {{"choices", {{{"message", {{"content", patch.dump()}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteProposer remote("127.0.0.1", port);
    auto patch = propose(pay401_trace(), sc.base_pkg.op("BookHotel"), remote, sc.ontology);
    server.stop();
    t.join();

    REQUIRE(patch);
    CHECK(patch->predicate.name == "blocked_card");
    json sent = json::parse(seen_body);
    CHECK(sent["temperature"] == 0.3);
    CHECK(sent["max_tokens"] == 512);
    REQUIRE(sent["messages"].size() == 2);
    CHECK(sent["messages"][1]["role"] == "user");
}

TEST_CASE("transport failures are retriable errors, not schema rejects", "[fdka]") {
    Scenario sc = walkthrough();
    RemoteProposer dead("127.0.0.1", 9);  // nothing listens on the discard port
    CHECK_THROWS_AS(propose(pay401_trace(), sc.base_pkg.op("BookHotel"), dead, sc.ontology),
                    ProposerTransportError);
}

// --- scoring ---------------------------------------------------------------------

TEST_CASE("plausibility rewards structural fit with the evidence", "[fdka]") {
    FailureTrace t = pay401_trace();
    CHECK(score_plausibility(blocked_card_patch(), t) >= 0.9);

    Patch unrelated = blocked_card_patch();
    unrelated.predicate.name = "wifi_included";
    unrelated.predicate.args = {Term::variable("card")};
    CHECK(score_plausibility(unrelated, t) <= 0.5);

    // a zero rubric maps through sigmoid(0)
    PlausibilityRubric flat{0.0, 0.0, 0.0, 0.0};
    CHECK(score_plausibility(unrelated, t, flat) == Catch::Approx(0.5));
}

TEST_CASE("consistency accepts the walkthrough patch and rejects contradictions",
          "[fdka]") {
    Scenario sc = walkthrough();
    FailureTrace t = pay401_trace();
    CHECK(score_consistency(blocked_card_patch(), sc.base_pkg.op("BookHotel"),
                            t.state_at_failure, sc.ontology) == 1);

    // p and not-p in the same precondition set is unsatisfiable
    Operator op = sc.base_pkg.op("BookHotel");
    Operator with_p = apply_patch(op, blocked_card_patch());
    Patch contradiction = blocked_card_patch();
    contradiction.predicate.negated = false;
    ProcessKnowledgeGraph pkg;
    pkg.add_operator(with_p);
    CHECK(score_consistency(contradiction, pkg.op("BookHotel"), t.state_at_failure,
                            sc.ontology) == 0);
}

TEST_CASE("consistency honors domain invariants", "[fdka]") {
    Ontology onto;
    onto.entity_types = {{"o1", "order"}};
    onto.invariants = {{pred("refunded", {"o1"}), pred("shipped", {"o1"})}};
    Operator op;
    op.name = "Refund";
    op.params = {{"o", "order"}};
    op.pre = {};
    Patch patch;
    patch.scope = "Refund";
    patch.edit_type = PatchType::ADD_PRECONDITION;
    patch.action = PatchAction::Add;
    patch.target = "pre";
    patch.predicate = Predicate{"refunded", {Term::variable("o")}};
    SymbolicState shipped({pred("shipped", {"o1"})});
    CHECK(score_consistency(patch, op, shipped, onto) == 0);  // forces the forbidden pair
    SymbolicState empty;
    CHECK(score_consistency(patch, op, empty, onto) == 1);  // refunded alone is fine
}

TEST_CASE("an oversized symbol universe fails loudly", "[fdka]") {
    Ontology onto;
    for (int i = 0; i < 25; ++i)
        onto.entity_types["e" + std::to_string(i)] = "thing";
    // 25 free atoms after grounding: beyond the brute-force cap
    Operator op;
    op.name = "Wide";
    op.params = {{"x", "thing"}};
    std::vector<Predicate> conj;
    for (int i = 0; i < 25; ++i) conj.push_back(pred("p" + std::to_string(i), {"e0"}));
    onto.invariants = {conj};
    Patch patch;
    patch.scope = "Wide";
    patch.edit_type = PatchType::ADD_PRECONDITION;
    patch.action = PatchAction::Add;
    patch.target = "pre";
    patch.predicate = Predicate{"p0", {Term::variable("x")}};
    SymbolicState empty;
    CHECK_THROWS_AS(score_consistency(patch, op, empty, onto), CapacityError);
}

TEST_CASE("utility counts prevented and mitigated replays", "[fdka]") {
    ExperiencePool pool;
    FailureTrace base = pay401_trace();
    for (int i = 0; i < 20; ++i) pool.record_failure(base);
    Operator op = walkthrough().base_pkg.op("BookHotel");

    int calls = 0;
    auto replay_16 = [&](const FailureTrace&, const Operator&) {
        return calls++ < 16 ? ReplayOutcome::PREVENT : ReplayOutcome::NONE;
    };
    UtilityResult r = score_utility(blocked_card_patch(), base, pool, op, replay_16);
    CHECK(r.score == Catch::Approx(0.8));
    CHECK(r.k_retrieved == 20);
    CHECK_FALSE(r.cold_start);

    calls = 0;
    auto replay_none = [&](const FailureTrace&, const Operator&) { return ReplayOutcome::NONE; };
    CHECK(score_utility(blocked_card_patch(), base, pool, op, replay_none).score == 0.0);

    calls = 0;
    auto replay_mixed = [&](const FailureTrace&, const Operator&) {
        int i = calls++;
        if (i < 10) return ReplayOutcome::PREVENT;
        if (i < 14) return ReplayOutcome::MITIGATE;
        return ReplayOutcome::NONE;
    };
    CHECK(score_utility(blocked_card_patch(), base, pool, op, replay_mixed).score ==
          Catch::Approx(0.6));
}

TEST_CASE("thin replay pools mark cold start", "[fdka]") {
    ExperiencePool pool;
    FailureTrace base = pay401_trace();
    pool.record_failure(base);
    Operator op = walkthrough().base_pkg.op("BookHotel");
    auto replay = [](const FailureTrace&, const Operator&) { return ReplayOutcome::PREVENT; };
    UtilityResult r = score_utility(blocked_card_patch(), base, pool, op, replay);
    CHECK(r.cold_start);
    CHECK(r.k_retrieved == 1);
    CHECK(r.score == Catch::Approx(1.0));
}

TEST_CASE("counterfactual replay equals a per-trace oracle on bounded pools",
          "[fdka][property]") {
    // pools up to 50 traces; the oracle re-derives each outcome independently
    Scenario sc = walkthrough();
    Environment env(sc, 7);
    const Operator& base_op = sc.base_pkg.op("BookHotel");
    Operator patched = apply_patch(base_op, blocked_card_patch());

    ExperiencePool pool;
    std::vector<FailureTrace> traces;
    for (int i = 0; i < 50; ++i) {
        FailureTrace t = pay401_trace();
        if (i % 5 == 4) {
            // gateway-style trace: still fails under the patch
            t.state_at_failure = SymbolicState({pred("hotel_available", {"sf", "apr10_12"}),
                                                pred("payment_method_present", {"corporate_card"}),
                                                pred("payment_method_present", {"personal_card"}),
                                                pred("payment_gateway_down", {})});
        }
        traces.push_back(t);
        pool.record_failure(t);
    }

    ReplayFn replay = [&](const FailureTrace& t, const Operator& o) {
        return env.counterfactual(t, o);
    };
    UtilityResult r =
        score_utility(blocked_card_patch(), traces[0], pool, base_op, replay, 50);

    // oracle: entailment-level re-derivation, no environment involved
    size_t prevent = 0;
    for (const auto& t : traces) {
        Binding b = t.failed_step.binding(patched);
        bool blocked_now = false;
        for (const auto& p : patched.pre) {
            Predicate g = substitute(p, b);
            if (g.ground() && !t.state_at_failure.holds(g)) blocked_now = true;
        }
        if (blocked_now) ++prevent;
    }
    CHECK(r.n_prevent == prevent);
    CHECK(r.score == Catch::Approx(static_cast<double>(prevent) / 50.0));
}

TEST_CASE("risk combines rule overlap and blast radius", "[fdka]") {
    CHECK(score_risk(0.0, 0.0) == 0.0);
    CHECK(score_risk(0.1, 0.2) == Catch::Approx(0.12));
    CHECK(score_risk(1.0, 1.0) == Catch::Approx(1.0));

    Scenario sc = walkthrough();
    RiskComponents rc = risk_components(blocked_card_patch(), sc.value_rules, sc.base_pkg);
    CHECK(rc.q_val == Catch::Approx(1.0 / 8.0));   // only the BookHotel rule overlaps
    CHECK(rc.blast == Catch::Approx(1.0 / 12.0));  // only the scoped operator is touched
}

TEST_CASE("the aggregate is the fixed linear form", "[fdka]") {
    CHECK(aggregate_score(0.97, 1.0, 0.8, 0.122, 0.0) ==
          Catch::Approx(0.8258).margin(1e-9));
    CHECK(aggregate_score(0.0, 0.0, 0.0, 0.0, 0.0) == 0.0);
    CHECK(aggregate_score(1.0, 1.0, 1.0, 0.0, 0.0) == Catch::Approx(0.90));
}

TEST_CASE("raising risk strictly lowers the aggregate", "[fdka][property]") {
    for (double r1 = 0.0; r1 < 1.0; r1 += 0.1) {
        double lo = aggregate_score(0.5, 1.0, 0.5, r1, 0.0);
        double hi = aggregate_score(0.5, 1.0, 0.5, r1 + 0.1, 0.0);
        CHECK(hi < lo);
    }
    // linear in each component holding others fixed
    double d1 = aggregate_score(0.3, 1, 0.5, 0.1, 0) - aggregate_score(0.2, 1, 0.5, 0.1, 0);
    double d2 = aggregate_score(0.8, 1, 0.5, 0.1, 0) - aggregate_score(0.7, 1, 0.5, 0.1, 0);
    CHECK(d1 == Catch::Approx(d2));
}

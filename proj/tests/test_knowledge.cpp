#include <catch2/catch_amalgamated.hpp>

#include <opmend/core.hpp>
#include <opmend/operators.hpp>
#include <opmend/patch.hpp>
#include <opmend/pkg.hpp>
#include <opmend/sha256.hpp>

#include <random>

using namespace opmend;

namespace {

Operator book_hotel() {
    Operator op;
    op.name = "BookHotel";
    op.params = {{"city", "city"}, {"dates", "date_range"}, {"card", "card"}};
    op.pre = {Predicate{"hotel_available", {Term::variable("city"), Term::variable("dates")}},
              Predicate{"payment_method_present", {Term::variable("card")}}};
    op.eff = {Predicate{"hotel_booked", {Term::variable("city"), Term::variable("dates")}}};
    op.cost = 2.0;
    op.tool_schema = {"v1", {{"city", "string"}, {"dates", "string"}, {"payment", "string"}}};
    return op;
}

Patch add_pre_patch(const std::string& scope, Predicate p,
                    PatchAction action = PatchAction::Add) {
    Patch patch;
    patch.scope = scope;
    patch.edit_type = PatchType::ADD_PRECONDITION;
    patch.predicate = std::move(p);
    patch.target = "pre";
    patch.action = action;
    patch.rationale = "test";
    return patch;
}

}  // namespace

TEST_CASE("sha256 matches the standard test vectors", "[knowledge]") {
    CHECK(Sha256::hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Sha256::hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    CHECK(Sha256::hex(std::string(64, 'a')) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
}

TEST_CASE("entailment is conjunction under closed-world negation", "[knowledge]") {
    SymbolicState home({pred("at", {"home"})});
    CHECK(entails(home, {pred("at", {"home"})}));

    SymbolicState empty;
    CHECK(entails(empty, {}));  // empty conjunction

    SymbolicState blocked({pred("blocked_card", {"c", "d"})});
    CHECK_FALSE(entails(blocked, {pred("blocked_card", {"c", "d"}, true)}));
    CHECK(entails(empty, {pred("blocked_card", {"c", "d"}, true)}));
}

TEST_CASE("entailment rejects unground queries", "[knowledge]") {
    SymbolicState s;
    Predicate p{"at", {Term::variable("x")}, false};
    CHECK_THROWS_AS(entails(s, {p}), ContractViolation);
}

TEST_CASE("states never hold a fact and its negation", "[knowledge]") {
    SymbolicState s({pred("a", {"x"})});
    s.add(pred("a", {"x"}, true));  // negated add removes the positive fact
    CHECK_FALSE(s.holds(pred("a", {"x"})));
    CHECK(s.holds(pred("a", {"x"}, true)));
}

TEST_CASE("precondition addition appends and leaves the original untouched", "[knowledge]") {
    Operator op = book_hotel();
    Predicate guard{"not_blocked_card",
                    {Term::variable("card"), Term::variable("dates")}, false};
    Patch patch = add_pre_patch("BookHotel", guard);

    Operator patched = apply_patch(op, patch);
    REQUIRE(patched.pre.size() == 3);
    CHECK(patched.pre.back().name == "not_blocked_card");
    CHECK(op.pre.size() == 2);  // source operator unchanged

    // purity: same inputs, structurally equal outputs
    CHECK(apply_patch(op, patch) == patched);
}

TEST_CASE("removing a nonexistent slot is a patch error", "[knowledge]") {
    Operator op = book_hotel();
    Patch patch = add_pre_patch("BookHotel", pred("never_there", {}), PatchAction::Remove);
    CHECK_THROWS_AS(apply_patch(op, patch), PatchError);

    Patch eff;
    eff.scope = "BookHotel";
    eff.edit_type = PatchType::REFINE_EFFECT;
    eff.target = "no_such_effect";
    eff.action = PatchAction::Replace;
    eff.predicate = pred("anything", {});
    CHECK_THROWS_AS(apply_patch(op, eff), PatchError);
}

TEST_CASE("patch variables must bind to scope params", "[knowledge]") {
    Operator op = book_hotel();
    Predicate bad{"needs", {Term::variable("ghost")}, false};
    CHECK_THROWS_AS(apply_patch(op, add_pre_patch("BookHotel", bad)), PatchTypeError);
}

TEST_CASE("schema update changes the version string", "[knowledge]") {
    Operator op = book_hotel();
    Patch patch;
    patch.scope = "BookHotel";
    patch.edit_type = PatchType::UPDATE_TOOL_SCHEMA;
    patch.action = PatchAction::Replace;
    patch.target = "payment";
    patch.schema_delta = {"payment_ref", "string", "v2"};
    Operator patched = apply_patch(op, patch);
    CHECK(patched.tool_schema.version == "v2");
    CHECK(patched.tool_schema.field("payment_ref") != nullptr);
    CHECK(patched.tool_schema.field("payment") == nullptr);

    // empty version in the delta auto-bumps the trailing integer
    Patch bump = patch;
    bump.schema_delta.version.clear();
    CHECK(apply_patch(op, bump).tool_schema.version == "v2");
}

TEST_CASE("effect refinement replaces the targeted slot only", "[knowledge]") {
    Operator op = book_hotel();
    Patch patch;
    patch.scope = "BookHotel";
    patch.edit_type = PatchType::REFINE_EFFECT;
    patch.action = PatchAction::Replace;
    patch.target = "hotel_booked";
    patch.predicate =
        Predicate{"hotel_booked_confirmed", {Term::variable("city"), Term::variable("dates")}};
    Operator patched = apply_patch(op, patch);
    REQUIRE(patched.eff.size() == 1);
    CHECK(patched.eff[0].name == "hotel_booked_confirmed");
}

TEST_CASE("adding a precondition strengthens monotonically", "[knowledge][property]") {
    Operator op = book_hotel();
    Predicate guard{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    Operator patched = apply_patch(op, add_pre_patch("BookHotel", guard));

    std::mt19937_64 rng(7);
    Binding b{{"city", "sf"}, {"dates", "d0"}, {"card", "c0"}};
    for (int trial = 0; trial < 200; ++trial) {
        SymbolicState s;
        if (rng() % 2) s.add(pred("hotel_available", {"sf", "d0"}));
        if (rng() % 2) s.add(pred("payment_method_present", {"c0"}));
        if (rng() % 2) s.add(pred("blocked_card", {"c0", "d0"}));
        std::vector<Predicate> pre_patched, pre_orig;
        for (const auto& p : patched.pre) pre_patched.push_back(substitute(p, b));
        for (const auto& p : op.pre) pre_orig.push_back(substitute(p, b));
        if (entails(s, pre_patched)) CHECK(entails(s, pre_orig));
    }
}

TEST_CASE("edit keys collide for reverse edits and separate scopes", "[knowledge]") {
    Predicate guard{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    Patch add = add_pre_patch("BookHotel", guard, PatchAction::Add);
    Patch remove = add_pre_patch("BookHotel", guard, PatchAction::Remove);
    remove.rationale = "completely different rationale";
    CHECK(edit_key(add) == edit_key(remove));

    Patch other_scope = add;
    other_scope.scope = "BookFlight";
    CHECK(edit_key(add) != edit_key(other_scope));

    // stable across invocations
    CHECK(edit_key(add) == edit_key(add));
    CHECK(edit_key(add).size() == 64);
}

TEST_CASE("edit keys are injective over distinct scope/predicate/slot triples",
          "[knowledge][property]") {
    std::mt19937_64 rng(42);
    auto word = [&](const char* prefix) {
        return std::string(prefix) + std::to_string(rng() % 40);
    };
    std::set<std::tuple<std::string, std::string, std::string>> triples;
    while (triples.size() < 1200)
        triples.insert({word("op"), word("pred"), word("slot")});
    std::set<std::string> keys;
    for (const auto& [scope, predicate, slot] : triples) {
        Patch p;
        p.scope = scope;
        p.edit_type = PatchType::ADD_PRECONDITION;
        p.predicate = pred(predicate, {});
        p.target = slot;
        keys.insert(edit_key(p));
    }
    CHECK(keys.size() == triples.size());
}

TEST_CASE("pkg version strictly increases on every mutation", "[knowledge]") {
    ProcessKnowledgeGraph pkg;
    pkg.add_operator(book_hotel());
    uint64_t v0 = pkg.version();
    Predicate guard{"blocked_card", {Term::variable("card"), Term::variable("dates")}, true};
    Patch patch = add_pre_patch("BookHotel", guard);
    std::vector<Patch> inverse = compute_rollback(pkg.op("BookHotel"), patch);
    pkg.apply(patch);
    CHECK(pkg.version() == v0 + 1);
    pkg.apply_all(inverse);
    CHECK(pkg.version() == v0 + 2);
}

TEST_CASE("rollback sets invert each edit type exactly", "[knowledge][property]") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 300; ++trial) {
        Operator op = book_hotel();
        Patch patch;
        patch.scope = op.name;
        switch (rng() % 4) {
            case 0:
                patch = add_pre_patch(op.name,
                                      Predicate{"extra" + std::to_string(rng() % 5),
                                                {Term::variable("card")},
                                                rng() % 2 == 0});
                break;
            case 1:
                patch = add_pre_patch(op.name, op.pre[rng() % op.pre.size()],
                                      PatchAction::Remove);
                break;
            case 2:
                patch.edit_type = PatchType::REFINE_EFFECT;
                patch.action = PatchAction::Replace;
                patch.target = "hotel_booked";
                patch.predicate = Predicate{
                    "hotel_booked", {Term::variable("city"), Term::constant("fixed")}};
                break;
            default:
                patch.edit_type = PatchType::UPDATE_TOOL_SCHEMA;
                if (rng() % 2 == 0) {
                    patch.action = PatchAction::Add;
                    patch.schema_delta = {"fresh" + std::to_string(rng() % 5), "string", "v9"};
                    patch.target = patch.schema_delta.field;
                } else {
                    patch.action = PatchAction::Replace;
                    patch.target = "payment";
                    patch.schema_delta = {"payment_v2", "string", "v3"};
                }
                break;
        }
        std::vector<Patch> inverse = compute_rollback(op, patch);
        Operator forward = apply_patch(op, patch);
        Operator restored = forward;
        for (const auto& inv : inverse) restored = apply_patch(restored, inv);
        REQUIRE(restored == op);
    }
}

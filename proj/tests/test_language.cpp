#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "synth.hpp"
#include "uavvln/language.hpp"
#include "uavvln/rng.hpp"

using namespace uavvln;
using namespace uavvln::language;

namespace {

SubGoalPlan parse(const std::string& text) {
    const auto actions = full_action_space();
    return parse_instruction({text}, actions);
}

struct Fixture {
    std::string instruction;
    std::string expected;
};

std::vector<Fixture> load_fixtures() {
    std::ifstream in(UAVVLN_DATA_DIR "/instructions.txt");
    std::vector<Fixture> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto sep = line.find(" => ");
        REQUIRE(sep != std::string::npos);
        out.push_back({line.substr(0, sep), line.substr(sep + 4)});
    }
    return out;
}

SubGoalPlan sample_plan() {
    return {{SubGoal::takeoff(), SubGoal::with_target(SubGoalKind::navigate_to, {"car", {"red"}, {}}),
             SubGoal::with_target(SubGoalKind::search, {"tree", {}, {}}), SubGoal::hover(),
             SubGoal::with_target(SubGoalKind::land_at, {"pad", {}, {}})},
            PlanSource::reference_parser};
}

} // namespace

TEST_CASE("three-clause instruction") {
    const auto plan = parse("take off, fly to the red car, then land");
    REQUIRE(plan.subgoals.size() == 3);
    CHECK(plan.subgoals[0] == SubGoal::takeoff(2.0));
    CHECK(plan.subgoals[1] == SubGoal::with_target(SubGoalKind::navigate_to, {"car", {"red"}, {}}));
    CHECK(plan.subgoals[2] == SubGoal::land());
    CHECK(plan.source == PlanSource::reference_parser);
}

TEST_CASE("hover from the ground gets a takeoff") {
    const auto plan = parse("hover");
    REQUIRE(plan.subgoals.size() == 2);
    CHECK(plan.subgoals[0] == SubGoal::takeoff(2.0));
    CHECK(plan.subgoals[1] == SubGoal::hover(kDefaultHoverSeconds));
}

TEST_CASE("relations attach to the target") {
    const auto plan = parse("fly to the chair near the desk");
    REQUIRE(plan.subgoals.size() == 2);
    const ObjectRef want{"chair", {}, Relation{RelationKind::near, {"desk", {}}}};
    CHECK(plan.subgoals[1] == SubGoal::with_target(SubGoalKind::navigate_to, want));
}

TEST_CASE("out-of-grammar text fails loudly") {
    try {
        parse("do a barrel roll");
        FAIL("expected UnparsableClause");
    } catch (const UnparsableClause& e) {
        CHECK(e.clause() == "do a barrel roll");
    }
    CHECK_THROWS_AS(parse("take off, then sing a song"), UnparsableClause);
    CHECK_THROWS_AS(parse(""), UnparsableClause);
}

TEST_CASE("missing action kinds are reported") {
    const std::vector<ActionKind> no_vertical = {ActionKind::takeoff, ActionKind::land, ActionKind::hover,
                                                 ActionKind::move_forward, ActionKind::turn_left,
                                                 ActionKind::turn_right};
    CHECK_THROWS_AS(parse_instruction({"climb to 5 meters"}, no_vertical), UnknownAction);
    CHECK_NOTHROW(parse_instruction({"take off, then land"}, no_vertical));
}

TEST_CASE("shipped corpus parses to its expected plans") {
    const auto fixtures = load_fixtures();
    CHECK(fixtures.size() == 60);
    for (const auto& f : fixtures) {
        CAPTURE(f.instruction);
        const auto plan = parse(f.instruction);
        CHECK(to_string(plan) == f.expected);
        CHECK(oracle::plan_well_formed(plan));
        CHECK(plan_violations(plan).empty());
    }
}

TEST_CASE("parsing is deterministic") {
    for (const auto& f : load_fixtures()) CHECK(parse(f.instruction) == parse(f.instruction));
}

TEST_CASE("synthesized instructions always yield well-formed plans") {
    Rng rng(2024);
    for (int i = 0; i < 2000; ++i) {
        const auto text = synth::instruction(rng);
        CAPTURE(text);
        SubGoalPlan plan;
        REQUIRE_NOTHROW(plan = parse(text));
        CHECK(oracle::plan_well_formed(plan));
        CHECK(plan_violations(plan).empty());
    }
}

TEST_CASE("plan violations catch broken plans") {
    CHECK_FALSE(plan_violations({}).empty());
    CHECK_FALSE(plan_violations({{SubGoal::takeoff(), SubGoal::land(), SubGoal::hover()}}).empty());
    CHECK_FALSE(plan_violations({{SubGoal::hover()}}).empty());
    CHECK(plan_violations({{SubGoal::hover()}}, false).empty());
    CHECK_FALSE(plan_violations({{SubGoal::takeoff(0.0)}}).empty());
}

TEST_CASE("repair drops inner landings and adds a takeoff") {
    const auto fixed = repair_subgoals({SubGoal::land(), SubGoal::hover(), SubGoal::land()});
    CHECK(oracle::plan_well_formed({fixed}));
    CHECK(fixed.back() == SubGoal::land());
}

TEST_CASE("corruption at rate zero is the identity") {
    const std::vector<std::string> vocab = {"car", "tree", "pad", "bench"};
    CHECK(corrupt_plan(sample_plan(), 0.0, 99, vocab) == sample_plan());
}

TEST_CASE("corruption at rate one alters every sub-goal") {
    const std::vector<std::string> vocab = {"car", "tree", "pad", "bench"};
    const auto plan = sample_plan();
    for (std::uint64_t seed : {1ULL, 7ULL, 42ULL}) {
        const auto c = corrupt_plan_detailed(plan, 1.0, seed, vocab);
        REQUIRE(c.altered.size() == plan.subgoals.size());
        for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
            CHECK(c.mask[i]);
            CHECK(c.altered[i] != plan.subgoals[i]);
        }
        CHECK(oracle::plan_well_formed(c.plan));
    }
}

TEST_CASE("corruption mask follows the seeded draws") {
    // Four uniforms per position; the first decides alteration.
    const std::vector<std::string> vocab = {"car", "tree", "pad", "bench"};
    const auto plan = sample_plan();
    for (double rate : {0.2, 0.5, 0.8}) {
        Rng rng(1234);
        const auto c = corrupt_plan_detailed(plan, rate, 1234, vocab);
        for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
            const double u = rng.uniform();
            rng.uniform();
            rng.uniform();
            rng.uniform();
            CHECK(c.mask[i] == (u < rate));
        }
    }
}

TEST_CASE("corruption rate matches the observed alteration fraction") {
    const std::vector<std::string> vocab = {"car", "tree", "pad", "bench", "house"};
    SubGoalPlan plan;
    plan.subgoals.push_back(SubGoal::takeoff());
    for (int i = 0; i < 9998; ++i)
        plan.subgoals.push_back(i % 2 ? SubGoal::hover() : SubGoal::with_target(SubGoalKind::navigate_to, {"car", {}, {}}));
    plan.subgoals.push_back(SubGoal::land());
    const auto c = corrupt_plan_detailed(plan, 0.5, 77, vocab);
    std::size_t altered = 0;
    for (std::size_t i = 0; i < plan.subgoals.size(); ++i) altered += c.altered[i] != plan.subgoals[i] ? 1 : 0;
    const double fraction = static_cast<double>(altered) / static_cast<double>(plan.subgoals.size());
    CHECK(std::abs(fraction - 0.5) <= 0.02);
    CHECK(oracle::plan_well_formed(c.plan));
}

TEST_CASE("corruption is deterministic and always repaired") {
    const std::vector<std::string> vocab = {"car", "tree", "pad"};
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        const auto plan = parse(synth::instruction(rng));
        const auto seed = rng.next_u64();
        const auto a = corrupt_plan(plan, 0.6, seed, vocab);
        CHECK(a == corrupt_plan(plan, 0.6, seed, vocab));
        CHECK(oracle::plan_well_formed(a));
    }
}

TEST_CASE("plans round trip through the wire format") {
    const auto plan = parse("take off to 3 meters, fly over the big red truck left of the house, then land on the pad");
    const auto doc = to_json(plan);
    CHECK(doc["schema"] == "decompose/1");
    auto back = plan_from_json(doc, PlanSource::reference_parser);
    CHECK(back == plan);
    CHECK(plan_from_json(doc).source == PlanSource::external_llm);

    auto extra = doc;
    extra["note"] = "x";
    CHECK_THROWS_AS(plan_from_json(extra), SchemaViolation);
    auto bad_kind = doc;
    bad_kind["subgoals"][0]["kind"] = "TELEPORT";
    CHECK_THROWS_AS(plan_from_json(bad_kind), SchemaViolation);
}

TEST_CASE("decompose requests carry the normative fields") {
    const auto actions = full_action_space();
    const std::vector<std::string> vocab = {"car", "tree"};
    const auto req = decompose_request({"fly to the car"}, actions, vocab);
    CHECK(req["schema"] == "decompose/1");
    CHECK(req["instruction"] == "fly to the car");
    CHECK(req["action_space"].size() == 8);
    CHECK(req["scene_vocabulary"] == nlohmann::json(vocab));
    CHECK(req.size() == 4);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "uavvln/eval.hpp"
#include "uavvln/executive.hpp"

using namespace uavvln;
using namespace uavvln::executive;
using language::ObjectRef;
using world::Pose;

namespace {

EpisodeSpec spec_for(world::Scene scene, const std::string& text, ObjectRef goal, std::uint64_t seed = 1) {
    EpisodeSpec s;
    s.scene = std::move(scene);
    s.instruction = {text};
    s.goal = goal;
    s.seed = seed;
    s.optimal_length = eval::optimal_length(s.scene, goal, s.success_radius);
    return s;
}

EpisodeSpec fountain_spec() {
    return spec_for(eval::generate_scene(world::Archetype::park, 0), "fly to the fountain", {"fountain", {}, {}});
}

PipelineConfig with_profile(const std::string& name) {
    PipelineConfig c;
    c.profile = perception::profile_by_name(name);
    return c;
}

// Every logged move, swept from the previous pose, stays clear of the inflated obstacles.
bool log_collision_free(const EpisodeSpec& spec, const EpisodeLog& log) {
    Pose prev = spec.scene.start_pose;
    for (const auto& st : log.steps) {
        for (const auto& o : spec.scene.objects)
            if (o.is_obstacle && oracle::segment_hits_box(prev.position, st.pose.position,
                                                          o.aabb.inflated(world::kDefaultClearance)))
                return false;
        prev = st.pose;
    }
    return true;
}

double logged_path_length(const EpisodeSpec& spec, const EpisodeLog& log) {
    Pose prev = spec.scene.start_pose;
    double sum = 0.0;
    for (const auto& st : log.steps) {
        sum += std::hypot(st.pose.position.x - prev.position.x, st.pose.position.y - prev.position.y,
                          st.pose.position.z - prev.position.z);
        prev = st.pose;
    }
    return sum;
}

} // namespace

TEST_CASE("termination criteria are evaluated independently") {
    auto scene = fixtures::car_field();
    EpisodeSpec spec;
    spec.scene = scene;
    spec.goal = ObjectRef{"car", {"red"}, {}};
    const Pose at_goal{{12, 7.9, 2.0}, 0.0};
    const auto truth = world::camera_angles(at_goal, world::CameraModel{}, scene.objects[0].aabb.center());
    REQUIRE(truth);
    const std::vector<perception::Detection> dets = {
        {"car_1", "car", truth->bearing, truth->elevation, truth->range, 0.9}};

    const auto all = check_termination(at_goal, dets, {3, 3}, spec);
    CHECK(all == TerminationReport{true, true, true, "car_1"});
    CHECK(all.satisfied());

    const auto early = check_termination(at_goal, dets, {3, 2}, spec);
    CHECK(early.goal_detected);
    CHECK(early.within_threshold);
    CHECK_FALSE(early.subgoals_done);
    CHECK_FALSE(early.satisfied());

    const Pose far{{3, 7.9, 2.0}, 0.0};
    const auto distant = check_termination(far, dets, {3, 3}, spec);
    CHECK(distant.goal_detected);
    CHECK_FALSE(distant.within_threshold);

    // Wrong attributes, weak confidence: not the goal.
    const std::vector<perception::Detection> blue = {{"car_2", "car", 0, 0, 4, 0.9}};
    CHECK_FALSE(check_termination(at_goal, blue, {3, 3}, spec).goal_detected);
    const std::vector<perception::Detection> weak = {{"car_1", "car", 0, 0, 4, 0.2}};
    CHECK_FALSE(check_termination(at_goal, weak, {3, 3}, spec).goal_detected);
}

TEST_CASE("an occluded goal at arrival does not terminate") {
    auto scene = fixtures::car_field();
    // A wall between the hovering drone and the car, reaching above the camera.
    scene.objects.push_back({"wall_1", "wall", {}, {{11.2, 5.5, 0}, {12.8, 5.9, 4}}, true});
    EpisodeSpec spec;
    spec.scene = scene;
    spec.goal = ObjectRef{"car", {"red"}, {}};
    const Pose pose{{12, 5.0, 2.0}, world::kPi / 2};
    const auto car = scene.objects[0].aabb.center();
    REQUIRE(oracle::segment_hits_box(pose.position, car, scene.objects.back().aabb));
    spec.success_radius = 3.5;
    REQUIRE(world::distance(pose.position, car) <= spec.success_radius);
    const std::vector<perception::DetectionQuery> q = {{*spec.goal}};
    const auto dets = perception::detect(pose, world::CameraModel{}, scene, q, perception::oracle_profile(), 0);
    CHECK(dets.empty());
    const auto r = check_termination(pose, dets, {2, 2}, spec);
    CHECK_FALSE(r.goal_detected);
    CHECK(r.within_threshold);
    CHECK(r.subgoals_done);
    CHECK_FALSE(r.satisfied());
}

TEST_CASE("goal-less episodes only need their sub-goals") {
    EpisodeSpec spec;
    spec.scene = fixtures::car_field();
    const auto r = check_termination({{3, 8, 2}, 0}, {}, {2, 2}, spec);
    CHECK(r.satisfied());
}

TEST_CASE("oracle episode reaches the fountain") {
    const auto spec = fountain_spec();
    REQUIRE(validate_spec(spec).empty());
    const auto log = run_episode(spec, with_profile("ORACLE"));
    CHECK(log.outcome.success);
    CHECK(log.outcome.label() == "success");
    CHECK(log.termination.satisfied());
    CHECK(log.path_length >= spec.optimal_length - 1e-9);
    CHECK(log.path_length == doctest::Approx(logged_path_length(spec, log)));
    CHECK(int(log.steps.size()) <= spec.max_steps);
    CHECK(log_collision_free(spec, log));
    REQUIRE_FALSE(log.steps.empty());
    const auto* fountain = spec.scene.find(log.termination.matched_object);
    REQUIRE(fountain);
    CHECK(fountain->label == "fountain");
    CHECK(world::distance(log.steps.back().pose.position, fountain->aabb.center()) <= spec.success_radius);
    for (std::size_t i = 1; i < log.steps.size(); ++i) CHECK(log.steps[i].subgoal >= log.steps[i - 1].subgoal);
}

TEST_CASE("episodes are byte-deterministic") {
    const auto spec = fountain_spec();
    for (const auto& name : perception::profile_names()) {
        const auto config = with_profile(name);
        CHECK(to_jsonl(run_episode(spec, config)) == to_jsonl(run_episode(spec, config)));
    }
}

TEST_CASE("closed vocabulary cannot find a fountain") {
    REQUIRE_FALSE(perception::coco_labels().contains("fountain"));
    const auto log = run_episode(fountain_spec(), with_profile("CLOSED_VOCAB_80"));
    CHECK_FALSE(log.outcome.success);
    CHECK(log.outcome.label() == "failure(search_exhausted)");
    // Eight turns per level, three climbs: the full scan ran.
    int turns = 0, climbs = 0;
    for (const auto& st : log.steps) {
        turns += st.action.kind == world::ActionKind::turn_left ? 1 : 0;
        climbs += st.action.kind == world::ActionKind::ascend ? 1 : 0;
    }
    CHECK(turns >= kScanTurns * (kScanAscents + 1));
    CHECK(climbs >= kScanAscents);
}

TEST_CASE("a one-step budget runs out") {
    auto spec = fountain_spec();
    spec.max_steps = 1;
    const auto log = run_episode(spec, with_profile("ORACLE"));
    CHECK(log.outcome.label() == "failure(step_budget)");
    CHECK(log.steps.size() <= 1);
}

TEST_CASE("a fenced goal is seen but unreachable") {
    const auto scene = fixtures::fenced_statue();
    REQUIRE(world::validate_scene(scene).empty());
    EpisodeSpec spec;
    spec.scene = scene;
    spec.instruction = {"fly to the statue"};
    spec.goal = ObjectRef{"statue", {}, {}};
    spec.seed = 3;
    CHECK_THROWS_AS(eval::optimal_length(scene, *spec.goal, spec.success_radius), planner::Unreachable);
    const auto log = run_episode(spec, with_profile("ORACLE"));
    CHECK(log.outcome.label() == "failure(unreachable)");
    bool seen = false;
    for (const auto& st : log.steps)
        for (const auto& d : st.detections) seen = seen || d.object_id == "statue_1";
    CHECK(seen);
    CHECK(log_collision_free(spec, log));
}

TEST_CASE("unparsable instructions fail the decomposition") {
    auto spec = fountain_spec();
    spec.instruction = {"do a barrel roll"};
    const auto log = run_episode(spec, with_profile("ORACLE"));
    CHECK(log.outcome.label() == "failure(decompose_error)");
    CHECK(log.steps.empty());
    CHECK_THROWS_AS(decompose(spec, with_profile("ORACLE")), language::UnparsableClause);
}

TEST_CASE("hooks see every step and can abort") {
    const auto spec = fountain_spec();
    const auto config = with_profile("ORACLE");
    const auto grid = planner::rasterize(spec.scene, config.planner.resolution, config.planner.clearance);
    std::size_t calls = 0;
    std::string plan_text;
    EpisodeHooks hooks;
    hooks.on_plan = [&](const language::SubGoalPlan& p) { plan_text = language::to_string(p); };
    hooks.on_step = [&](const Progress& p) {
        ++calls;
        CHECK(p.steps_taken == calls);
        return true;
    };
    const auto log = run_episode(spec, config, grid, hooks);
    CHECK(plan_text == "TAKEOFF(2) ; NAVIGATE_TO(fountain)");
    CHECK(calls == log.steps.size());
    CHECK(to_jsonl(log) == to_jsonl(run_episode(spec, config)));

    hooks.on_step = [](const Progress& p) { return p.steps_taken < 3; };
    const auto aborted = run_episode(spec, config, grid, hooks);
    CHECK(aborted.outcome.label() == "failure(aborted)");
    CHECK(aborted.steps.size() == 3);
}

TEST_CASE("logs round trip through JSON lines") {
    const auto spec = fountain_spec();
    const auto log = run_episode(spec, with_profile("OPEN_VOCAB_PRECISE"));
    const auto text = to_jsonl(log);
    const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(first["schema"] == "log/1");
    CHECK(first["digest"] == spec_digest(spec));
    const auto back = log_from_jsonl(text);
    CHECK(to_jsonl(back) == text);
    CHECK(back.outcome.label() == log.outcome.label());
    CHECK(back.steps.size() == log.steps.size());
    CHECK_THROWS_AS(log_from_jsonl("{\"schema\":\"log/2\"}\n"), SchemaViolation);
}

TEST_CASE("spec validation") {
    auto spec = fountain_spec();
    CHECK(validate_spec(spec).empty());
    spec.success_radius = 0;
    CHECK_FALSE(validate_spec(spec).empty());
    spec = fountain_spec();
    spec.goal = ObjectRef{"unicorn", {}, {}};
    CHECK_FALSE(validate_spec(spec).empty());
    spec = fountain_spec();
    spec.optimal_length = 0;
    CHECK_FALSE(validate_spec(spec).empty());
}

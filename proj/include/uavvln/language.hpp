#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "uavvln/errors.hpp"
#include "uavvln/remote.hpp"
#include "uavvln/world.hpp"

namespace uavvln::language {

using world::ActionKind;

inline constexpr double kDefaultTakeoffAltitude = 2.0;
inline constexpr double kDefaultHoverSeconds = 3.0;

struct Instruction {
    std::string text;
};

enum class RelationKind { near, left_of, right_of, behind, in_front_of };

std::string_view to_string(RelationKind k);

// Label plus attributes, without a relation.
struct Noun {
    std::string label;
    std::set<std::string> attributes;
    friend bool operator==(const Noun&, const Noun&) = default;
};

struct Relation {
    RelationKind kind = RelationKind::near;
    Noun anchor;  // anchors carry no relation of their own
    friend bool operator==(const Relation&, const Relation&) = default;
};

struct ObjectRef {
    std::string label;
    std::set<std::string> attributes;
    std::optional<Relation> relation;

    Noun noun() const { return {label, attributes}; }
    friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

std::string to_string(const ObjectRef& ref);

enum class SubGoalKind {
    takeoff,
    navigate_to,
    fly_over,
    ascend_to,
    descend_to,
    search,
    hover,
    land,
    land_at,
};

inline constexpr SubGoalKind kAllSubGoalKinds[] = {
    SubGoalKind::takeoff, SubGoalKind::navigate_to, SubGoalKind::fly_over,
    SubGoalKind::ascend_to, SubGoalKind::descend_to, SubGoalKind::search,
    SubGoalKind::hover, SubGoalKind::land, SubGoalKind::land_at,
};

std::string_view to_string(SubGoalKind k);
SubGoalKind subgoal_kind_from_string(std::string_view s);

bool takes_target(SubGoalKind k);
bool takes_scalar(SubGoalKind k);
bool is_landing(SubGoalKind k);
// Everything except TAKEOFF and LAND needs the drone airborne.
bool requires_airborne(SubGoalKind k);
// Action kinds a sub-goal may compile to.
std::vector<ActionKind> required_actions(SubGoalKind k);

struct SubGoal {
    SubGoalKind kind = SubGoalKind::hover;
    double value = 0.0;  // altitude (TAKEOFF/ASCEND_TO/DESCEND_TO) or seconds (HOVER)
    std::optional<ObjectRef> target;

    static SubGoal takeoff(double alt = kDefaultTakeoffAltitude) { return {SubGoalKind::takeoff, alt, {}}; }
    static SubGoal hover(double seconds = kDefaultHoverSeconds) { return {SubGoalKind::hover, seconds, {}}; }
    static SubGoal land() { return {SubGoalKind::land, 0.0, {}}; }
    static SubGoal with_target(SubGoalKind k, ObjectRef ref) { return {k, 0.0, std::move(ref)}; }
    static SubGoal with_value(SubGoalKind k, double v) { return {k, v, {}}; }

    friend bool operator==(const SubGoal&, const SubGoal&) = default;
};

std::string to_string(const SubGoal& g);

enum class PlanSource { reference_parser, external_llm };

struct SubGoalPlan {
    std::vector<SubGoal> subgoals;
    PlanSource source = PlanSource::reference_parser;
    friend bool operator==(const SubGoalPlan&, const SubGoalPlan&) = default;
};

// "TAKEOFF(2) ; NAVIGATE_TO(red car) ; LAND"
std::string to_string(const SubGoalPlan& plan);

class UnparsableClause : public Error {
public:
    explicit UnparsableClause(std::string clause)
        : Error("unparsable clause: '" + clause + "'"), clause_(std::move(clause)) {}
    const std::string& clause() const { return clause_; }

private:
    std::string clause_;
};

class UnknownAction : public Error {
public:
    using Error::Error;
};

class InvariantViolation : public Error {
public:
    using Error::Error;
};

// Structural problems of a plan; empty when every invariant holds.
std::vector<std::string> plan_violations(const SubGoalPlan& plan, bool starts_landed = true);

// Drops non-terminal landings and prepends TAKEOFF when the first airborne
// sub-goal would otherwise run from the ground.
std::vector<SubGoal> repair_subgoals(std::vector<SubGoal> subgoals, bool starts_landed = true);

std::vector<ActionKind> full_action_space();

struct ParserOptions {
    bool starts_landed = true;
    double takeoff_altitude = kDefaultTakeoffAltitude;
    double hover_seconds = kDefaultHoverSeconds;
};

// Template-grammar decomposition. Throws UnparsableClause or UnknownAction.
SubGoalPlan parse_instruction(const Instruction& instruction, std::span<const ActionKind> action_space,
                              const ParserOptions& options = {});

// Sends a decompose/1 request and validates the reply. Throws
// BackendUnavailable, SchemaViolation or InvariantViolation.
SubGoalPlan remote_decompose(const Instruction& instruction, std::span<const ActionKind> action_space,
                             std::span<const std::string> scene_vocabulary, const remote::Endpoint& backend,
                             bool starts_landed = true);

struct Corruption {
    std::vector<SubGoal> altered;  // before structural repair, same length as the input
    std::vector<bool> mask;        // which positions were altered
    SubGoalPlan plan;              // repaired result
};

Corruption corrupt_plan_detailed(const SubGoalPlan& plan, double rate, std::uint64_t seed,
                                 std::span<const std::string> vocabulary);

// Each sub-goal is independently, with probability `rate`, swapped to another
// kind or retargeted to another vocabulary label.
SubGoalPlan corrupt_plan(const SubGoalPlan& plan, double rate, std::uint64_t seed,
                         std::span<const std::string> vocabulary);

nlohmann::json to_json(const ObjectRef& ref);
ObjectRef object_ref_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SubGoal& g);
SubGoal subgoal_from_json(const nlohmann::json& j);
// decompose/1 response document.
nlohmann::json to_json(const SubGoalPlan& plan);
SubGoalPlan plan_from_json(const nlohmann::json& doc, PlanSource source = PlanSource::external_llm);

nlohmann::json decompose_request(const Instruction& instruction, std::span<const ActionKind> action_space,
                                 std::span<const std::string> scene_vocabulary);

} // namespace uavvln::language

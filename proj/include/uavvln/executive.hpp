#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "uavvln/language.hpp"
#include "uavvln/perception.hpp"
#include "uavvln/planner.hpp"
#include "uavvln/remote.hpp"
#include "uavvln/world.hpp"

namespace uavvln::executive {

inline constexpr double kDefaultSuccessRadius = 1.5;
inline constexpr int kScanTurns = 8;
inline constexpr int kScanAscents = 3;
inline constexpr double kScanAscent = 1.0;

struct EpisodeSpec {
    world::Scene scene;
    language::Instruction instruction;
    // Always set for evaluation episodes; interactive sessions may run goal-less
    // instructions ("take off, then land"), for which criteria 1 and 2 hold vacuously.
    std::optional<language::ObjectRef> goal;
    double success_radius = kDefaultSuccessRadius;
    double optimal_length = 0.0;
    std::uint64_t seed = 0;
    int max_steps = 400;
};

std::vector<std::string> validate_spec(const EpisodeSpec& spec);
nlohmann::json to_json(const EpisodeSpec& spec);
std::string spec_digest(const EpisodeSpec& spec);

struct TerminationReport {
    bool goal_detected = false;
    bool within_threshold = false;
    bool subgoals_done = false;
    std::string matched_object;  // id of the goal object used for the proximity check

    bool satisfied() const { return goal_detected && within_threshold && subgoals_done; }
    friend bool operator==(const TerminationReport&, const TerminationReport&) = default;
};

struct PlanProgress {
    std::size_t total = 0;
    std::size_t completed = 0;
};

// Goal detection, proximity and sub-goal completion, evaluated independently.
TerminationReport check_termination(const world::Pose& pose, std::span<const perception::Detection> detections,
                                    const PlanProgress& progress, const EpisodeSpec& spec,
                                    double acceptance_threshold = perception::kDefaultAcceptanceThreshold);

enum class FailureReason { search_exhausted, unreachable, step_budget, decompose_error, termination_unmet, aborted };

std::string_view to_string(FailureReason r);
FailureReason failure_reason_from_string(std::string_view s);

struct Outcome {
    bool success = false;
    std::optional<FailureReason> reason;
    std::string detail;

    std::string label() const;  // "success" or "failure(<reason>)"
};

struct StepRecord {
    int index = 0;
    world::Action action;
    world::Pose pose;  // after the action
    std::vector<perception::Detection> detections;
    int subgoal = 0;
};

struct EpisodeLog {
    std::string spec_digest;
    nlohmann::json spec_summary;
    language::SubGoalPlan plan;
    std::vector<StepRecord> steps;
    Outcome outcome;
    double path_length = 0.0;
    TerminationReport termination;
};

struct ParserVariant {
    enum class Kind { reference, external_llm };
    Kind kind = Kind::reference;
    std::optional<remote::Endpoint> endpoint;
    double corruption_rate = 0.0;
};

struct PipelineConfig {
    ParserVariant parser;
    perception::FidelityProfile profile = perception::oracle_profile();
    planner::PlannerConfig planner;
    world::CameraModel camera;
    int termination_retries = kScanTurns;  // re-checks after the last sub-goal, one turn or hover apart
};

// Live view of an episode, handed to the step hook.
struct Progress {
    const language::SubGoalPlan* plan = nullptr;
    world::Pose pose;
    int active_subgoal = 0;
    std::size_t completed_subgoals = 0;
    const std::vector<perception::Detection>* detections = nullptr;
    std::size_t steps_taken = 0;
};

struct EpisodeHooks {
    // Called once after decomposition.
    std::function<void(const language::SubGoalPlan&)> on_plan;
    // Called after every executed action; returning false aborts the episode.
    std::function<bool(const Progress&)> on_step;
};

// Plan the pipeline executes for `spec`, corruption included. Throws the
// parser's or the remote decomposer's errors, or ConfigError.
language::SubGoalPlan decompose(const EpisodeSpec& spec, const PipelineConfig& config);

// Decompose, ground, plan and act until the termination criteria hold or a
// failure is recorded. Never throws for in-episode failures.
EpisodeLog run_episode(const EpisodeSpec& spec, const PipelineConfig& config);
EpisodeLog run_episode(const EpisodeSpec& spec, const PipelineConfig& config, const planner::OccupancyGrid& grid,
                       const EpisodeHooks& hooks = {});

// log/1 JSON Lines: spec line, one line per step, outcome line.
std::string to_jsonl(const EpisodeLog& log);
EpisodeLog log_from_jsonl(const std::string& text);
void write_log(const EpisodeLog& log, const std::string& path);

} // namespace uavvln::executive

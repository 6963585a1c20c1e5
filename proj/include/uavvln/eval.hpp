#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "uavvln/errors.hpp"
#include "uavvln/executive.hpp"
#include "uavvln/world.hpp"

namespace uavvln::eval {

class EmptyInput : public Error {
public:
    using Error::Error;
};

// What the metrics need from one episode.
struct EpisodeOutcome {
    bool success = false;
    double path_length = 0.0;
    double optimal_length = 0.0;
};

double success_rate(std::span<const EpisodeOutcome> outcomes);
// (1/N) sum S_i * l_i / max(p_i, l_i)
double spl(std::span<const EpisodeOutcome> outcomes);

double success_rate(std::span<const executive::EpisodeLog> logs);
double spl(std::span<const executive::EpisodeLog> logs, std::span<const executive::EpisodeSpec> specs);

// Labels an archetype may place.
const std::set<std::string>& archetype_vocabulary(world::Archetype archetype);

world::Scene generate_scene(world::Archetype archetype, std::uint64_t seed);

// Grid path length from the start cell to the nearest free cell within
// `radius` of any goal-matching object centre. Throws planner::Unreachable.
double optimal_length(const world::Scene& scene, const language::ObjectRef& goal, double radius,
                      const planner::PlannerConfig& config = {});

// Instruction wording for an object reference, e.g. "the red car near the house".
std::string phrase(const language::ObjectRef& ref);

struct EpisodeOptions {
    double success_radius = executive::kDefaultSuccessRadius;
    int max_steps = 400;
    planner::PlannerConfig planner;
};

std::vector<executive::EpisodeSpec> generate_episodes(const world::Scene& scene, int count, std::uint64_t seed,
                                                      const EpisodeOptions& options = {});

struct Benchmark {
    std::vector<world::Scene> scenes;
    std::vector<executive::EpisodeSpec> episodes;
    std::vector<std::size_t> scene_of;  // episode -> index into scenes
};

Benchmark make_benchmark(std::span<const world::Archetype> archetypes, int episodes_per_scene, std::uint64_t seed,
                         const EpisodeOptions& options = {});

struct EpisodeResult {
    std::size_t scene = 0;
    std::string instruction;
    std::string outcome;
    bool success = false;
    double path_length = 0.0;
    double optimal_length = 0.0;
    std::size_t steps = 0;
    std::string log_digest;  // digest of the full JSONL log
};

struct SceneResult {
    std::string scene;
    std::string archetype;
    std::size_t episodes = 0;
    std::size_t successes = 0;
    double sr = 0.0;
    double spl = 0.0;
};

struct SuiteResult {
    std::string name;
    std::string config_digest;
    std::vector<SceneResult> scenes;
    SceneResult overall;
    std::vector<EpisodeResult> episodes;
};

struct RowConfig {
    std::string name;
    executive::PipelineConfig pipeline;
};

nlohmann::json to_json(const executive::PipelineConfig& config);
std::string config_digest(const executive::PipelineConfig& config);

// Episodes run across OpenMP threads; aggregation folds in episode order.
SuiteResult run_suite(const Benchmark& bench, const RowConfig& row);
// Single-threaded reference for run_suite.
SuiteResult run_suite_serial(const Benchmark& bench, const RowConfig& row);

// One run_suite per row over the same episodes. Throws ConfigError on empty rows.
std::vector<SuiteResult> ablation_matrix(const Benchmark& bench, std::span<const RowConfig> rows);

nlohmann::json to_json(const SuiteResult& result);
// Aligned text table: one line per result, SR(%) and SPL per scene.
std::string format_table(std::span<const SuiteResult> results);
// row,scene,episodes,successes,sr,spl
std::string to_csv(std::span<const SuiteResult> results);

// suite/1 configuration file.
struct SuiteConfig {
    std::string name = "suite";
    std::vector<world::Archetype> archetypes;
    int episodes_per_scene = 15;
    std::uint64_t seed = 0;
    EpisodeOptions episode;
    RowConfig base;
    std::vector<RowConfig> rows;
    bool rows_given = false;  // the document has a "rows" key, possibly empty
};

SuiteConfig suite_config_from_json(const nlohmann::json& doc);
SuiteConfig load_suite_config(const std::string& path);

} // namespace uavvln::eval

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"

#include "uavvln/errors.hpp"
#include "uavvln/language.hpp"
#include "uavvln/perception.hpp"
#include "uavvln/world.hpp"

namespace uavvln::planner {

using world::Action;
using world::Vec3;

struct Cell {
    int x = 0;
    int y = 0;
    int z = 0;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

// 3D occupancy over a scene. Cell (i,j,k) is centred on bounds.min + (i,j,k) * resolution.
class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(double resolution, int nx, int ny, int nz, Vec3 origin);

    double resolution() const { return resolution_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    // Minimum corner of cell (0,0,0).
    Vec3 origin() const { return origin_; }
    std::size_t size() const { return occupied_.size(); }

    bool in_range(Cell c) const {
        return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < nx_ && c.y < ny_ && c.z < nz_;
    }
    std::size_t index(Cell c) const {
        return (static_cast<std::size_t>(c.z) * static_cast<std::size_t>(ny_) + static_cast<std::size_t>(c.y)) *
                   static_cast<std::size_t>(nx_) +
               static_cast<std::size_t>(c.x);
    }
    Cell cell_at(std::size_t index) const;
    bool occupied(Cell c) const { return occupied_[index(c)] != 0; }
    bool free(Cell c) const { return in_range(c) && !occupied(c); }
    void set_occupied(Cell c, bool value) { occupied_[index(c)] = value ? 1 : 0; }

    Vec3 center(Cell c) const;
    world::Aabb cell_box(Cell c) const;
    // Cell whose box contains p, if p lies on the grid.
    std::optional<Cell> cell_of(Vec3 p) const;

    const std::vector<std::uint8_t>& cells() const { return occupied_; }
    std::vector<std::uint8_t>& cells() { return occupied_; }

    friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
    double resolution_ = 1.0;
    int nx_ = 0;
    int ny_ = 0;
    int nz_ = 0;
    Vec3 origin_;
    std::vector<std::uint8_t> occupied_;
};

// All-free grid covering scene.bounds.
OccupancyGrid empty_grid(const world::Scene& scene, double resolution);

// A cell is occupied iff its box, inflated by clearance, touches an obstacle box.
// OpenMP kernel over z-slices.
OccupancyGrid rasterize(const world::Scene& scene, double resolution, double clearance);
// Serial cell-by-obstacle loop; kept as the reference for the parallel kernel.
OccupancyGrid rasterize_reference(const world::Scene& scene, double resolution, double clearance);

class Unreachable : public Error {
public:
    using Error::Error;
};

class ValidationFailure : public Error {
public:
    ValidationFailure(std::size_t step, const std::string& why)
        : Error("plan step " + std::to_string(step) + " fails replay: " + why), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

// 6-connected A* with a Manhattan heuristic. Ties: lower f, lower z, then (x, y).
// Cells below min_z count as blocked.
std::vector<Cell> shortest_path(const OccupancyGrid& grid, Cell from, Cell to, int min_z = 0);

// Breadth-first hop counts from `from` over free cells; -1 where unreachable.
std::vector<int> hop_distances(const OccupancyGrid& grid, Cell from);
// Multi-source variant: hops to the nearest source.
std::vector<int> hop_distances(const OccupancyGrid& grid, std::span<const Cell> sources, int min_z = 0);

struct PlanStep {
    Action action;
    int subgoal = 0;
    friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct ActionPlan {
    std::vector<PlanStep> steps;
    double estimated_length = 0.0;
    friend bool operator==(const ActionPlan&, const ActionPlan&) = default;
};

// Sum of translation distances when `steps` run from `start`.
double replay_length(const world::Pose& start, std::span<const PlanStep> steps, const world::Scene& scene);

// Turns + merged MOVE_FORWARDs for horizontal steps, ASCEND/DESCEND per vertical step.
ActionPlan path_to_actions(std::span<const Cell> cells, double initial_yaw, double resolution, int subgoal = 0);

struct PlannerConfig {
    double resolution = 0.5;
    double clearance = world::kDefaultClearance;
    double fly_over_offset = 1.0;
    double acceptance_threshold = perception::kDefaultAcceptanceThreshold;
};

struct PlanningContext {
    const world::Scene& scene;
    const OccupancyGrid& grid;
    world::CameraModel camera;
    PlannerConfig config;
};

struct NeedsSearch {};

struct Segment {
    ActionPlan plan;
    std::optional<Cell> target;  // set for goals that navigate to a detection
};

using SubgoalResult = std::variant<Segment, NeedsSearch>;

// Detection chosen to ground `ref`: highest confidence, then nearest, then id.
std::optional<perception::Detection> best_detection(const language::ObjectRef& ref,
                                                    std::span<const perception::Detection> detections,
                                                    double acceptance_threshold);

// Closest free cell to p (ties: lower z, then x, then y) satisfying `accept`.
std::optional<Cell> nearest_free_cell(const OccupancyGrid& grid, Vec3 p,
                                      const std::function<bool(Cell)>& accept = {});

// Free cell whose column down to the ground is free as well.
bool landable(const OccupancyGrid& grid, Cell c);

// Cell from which a sub-goal of `kind` approaches an object seen at p.
std::optional<Cell> approach_cell(const OccupancyGrid& grid, language::SubGoalKind kind, Vec3 p,
                                  double fly_over_offset);

// Target cell the planner would head for, given current detections.
std::optional<Cell> grounded_target(const language::SubGoal& goal, const world::Pose& pose,
                                    std::span<const perception::Detection> detections,
                                    const PlanningContext& ctx);

// Compiles one sub-goal. Throws Unreachable.
SubgoalResult plan_subgoal(const language::SubGoal& goal, int subgoal_index, const world::Pose& pose,
                           std::span<const perception::Detection> detections, const PlanningContext& ctx);

// Concatenates segments and replays the result from `start`. Throws ValidationFailure.
ActionPlan assemble_mission(std::span<const ActionPlan> segments, const world::Scene& scene,
                            const world::Pose& start, double clearance = world::kDefaultClearance);

nlohmann::json to_json(const ActionPlan& plan);
ActionPlan action_plan_from_json(const nlohmann::json& doc);

} // namespace uavvln::planner

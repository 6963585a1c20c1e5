#include "uavvln/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace uavvln::planner {

using world::Aabb;
using world::ActionKind;
using world::kPi;

OccupancyGrid::OccupancyGrid(double resolution, int nx, int ny, int nz, Vec3 origin)
    : resolution_(resolution), nx_(nx), ny_(ny), nz_(nz), origin_(origin),
      occupied_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz), 0) {}

Cell OccupancyGrid::cell_at(std::size_t index) const {
    const auto sx = static_cast<std::size_t>(nx_);
    const auto sy = static_cast<std::size_t>(ny_);
    return {static_cast<int>(index % sx), static_cast<int>((index / sx) % sy), static_cast<int>(index / (sx * sy))};
}

Vec3 OccupancyGrid::center(Cell c) const {
    return {origin_.x + (c.x + 0.5) * resolution_, origin_.y + (c.y + 0.5) * resolution_,
            origin_.z + (c.z + 0.5) * resolution_};
}

Aabb OccupancyGrid::cell_box(Cell c) const {
    const double h = resolution_ / 2.0;
    const Vec3 m = center(c);
    return {{m.x - h, m.y - h, m.z - h}, {m.x + h, m.y + h, m.z + h}};
}

std::optional<Cell> OccupancyGrid::cell_of(Vec3 p) const {
    Cell c{static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
           static_cast<int>(std::floor((p.y - origin_.y) / resolution_)),
           static_cast<int>(std::floor((p.z - origin_.z) / resolution_))};
    if (!in_range(c)) return std::nullopt;
    return c;
}

OccupancyGrid empty_grid(const world::Scene& scene, double resolution) {
    if (!(resolution > 0.0)) throw ConfigError("grid resolution must be positive");
    const Vec3 extent = scene.bounds.max - scene.bounds.min;
    auto count = [&](double e) { return static_cast<int>(std::floor(e / resolution + 1e-9)) + 1; };
    const double h = resolution / 2.0;
    return OccupancyGrid(resolution, count(extent.x), count(extent.y), count(extent.z),
                         scene.bounds.min - Vec3{h, h, h});
}

namespace {

std::vector<const world::SceneObject*> obstacles(const world::Scene& scene) {
    std::vector<const world::SceneObject*> out;
    for (const auto& o : scene.objects)
        if (o.is_obstacle) out.push_back(&o);
    return out;
}

// Index range [lo, hi] of cells along one axis that may touch [a, b]; one cell of slack
// on each side, the exact box test decides.
std::pair<int, int> candidate_range(double a, double b, double origin, double res, int n) {
    const int lo = static_cast<int>(std::floor((a - origin) / res)) - 1;
    const int hi = static_cast<int>(std::floor((b - origin) / res)) + 1;
    return {std::max(lo, 0), std::min(hi, n - 1)};
}

} // namespace

OccupancyGrid rasterize_reference(const world::Scene& scene, double resolution, double clearance) {
    OccupancyGrid grid = empty_grid(scene, resolution);
    const auto obs = obstacles(scene);
    for (int z = 0; z < grid.nz(); ++z)
        for (int y = 0; y < grid.ny(); ++y)
            for (int x = 0; x < grid.nx(); ++x) {
                const Cell c{x, y, z};
                const Aabb box = grid.cell_box(c).inflated(clearance);
                for (const auto* o : obs) {
                    if (box.intersects(o->aabb)) {
                        grid.set_occupied(c, true);
                        break;
                    }
                }
            }
    return grid;
}

OccupancyGrid rasterize(const world::Scene& scene, double resolution, double clearance) {
    OccupancyGrid grid = empty_grid(scene, resolution);
    const auto obs = obstacles(scene);
    const double res = grid.resolution();
    const Vec3 origin = grid.origin();
    const int nz = grid.nz();

    // Each thread owns whole z-slices, so writes never overlap.
#pragma omp parallel for schedule(dynamic, 1)
    for (int z = 0; z < nz; ++z) {
        for (const auto* o : obs) {
            const Aabb inflated = o->aabb.inflated(clearance);
            const auto [zlo, zhi] = candidate_range(inflated.min.z, inflated.max.z, origin.z, res, nz);
            if (z < zlo || z > zhi) continue;
            const auto [ylo, yhi] = candidate_range(inflated.min.y, inflated.max.y, origin.y, res, grid.ny());
            const auto [xlo, xhi] = candidate_range(inflated.min.x, inflated.max.x, origin.x, res, grid.nx());
            for (int y = ylo; y <= yhi; ++y)
                for (int x = xlo; x <= xhi; ++x) {
                    const Cell c{x, y, z};
                    if (grid.occupied(c)) continue;
                    if (grid.cell_box(c).inflated(clearance).intersects(o->aabb)) grid.set_occupied(c, true);
                }
        }
    }
    return grid;
}

namespace {

constexpr Cell kNeighbours[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

Cell step(Cell c, Cell d) { return {c.x + d.x, c.y + d.y, c.z + d.z}; }

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z); }

} // namespace

std::vector<Cell> shortest_path(const OccupancyGrid& grid, Cell from, Cell to, int min_z) {
    auto usable = [&](Cell c) { return c.z >= min_z && grid.free(c); };
    if (!usable(from)) throw Unreachable("start cell is not free");
    if (!usable(to)) throw Unreachable("target cell is not free");
    if (from == to) return {from};

    // (f, z, x, y): lower f, then lower z, then lexicographic (x, y).
    using Key = std::tuple<int, int, int, int>;
    std::priority_queue<Key, std::vector<Key>, std::greater<>> open;
    std::vector<int> g(grid.size(), std::numeric_limits<int>::max());
    std::vector<std::int64_t> parent(grid.size(), -1);
    std::vector<std::uint8_t> closed(grid.size(), 0);

    g[grid.index(from)] = 0;
    open.emplace(manhattan(from, to), from.z, from.x, from.y);
    while (!open.empty()) {
        const auto [f, z, x, y] = open.top();
        open.pop();
        const Cell c{x, y, z};
        const std::size_t ci = grid.index(c);
        if (closed[ci]) continue;
        closed[ci] = 1;
        if (c == to) {
            std::vector<Cell> path;
            for (std::int64_t i = static_cast<std::int64_t>(ci); i >= 0; i = parent[static_cast<std::size_t>(i)])
                path.push_back(grid.cell_at(static_cast<std::size_t>(i)));
            std::reverse(path.begin(), path.end());
            return path;
        }
        for (const Cell d : kNeighbours) {
            const Cell n = step(c, d);
            if (!usable(n)) continue;
            const std::size_t ni = grid.index(n);
            if (closed[ni] || g[ci] + 1 >= g[ni]) continue;
            g[ni] = g[ci] + 1;
            parent[ni] = static_cast<std::int64_t>(ci);
            open.emplace(g[ni] + manhattan(n, to), n.z, n.x, n.y);
        }
    }
    throw Unreachable("no collision-free path between the cells");
}

std::vector<int> hop_distances(const OccupancyGrid& grid, std::span<const Cell> sources, int min_z) {
    auto usable = [&](Cell c) { return c.z >= min_z && grid.free(c); };
    std::vector<int> dist(grid.size(), -1);
    std::queue<Cell> q;
    for (const Cell s : sources) {
        if (!usable(s) || dist[grid.index(s)] == 0) continue;
        dist[grid.index(s)] = 0;
        q.push(s);
    }
    while (!q.empty()) {
        const Cell c = q.front();
        q.pop();
        for (const Cell d : kNeighbours) {
            const Cell n = step(c, d);
            if (!usable(n) || dist[grid.index(n)] >= 0) continue;
            dist[grid.index(n)] = dist[grid.index(c)] + 1;
            q.push(n);
        }
    }
    return dist;
}

std::vector<int> hop_distances(const OccupancyGrid& grid, Cell from) {
    return hop_distances(grid, std::span<const Cell>(&from, 1), 0);
}

double replay_length(const world::Pose& start, std::span<const PlanStep> steps, const world::Scene& scene) {
    double length = 0.0;
    world::Pose pose = start;
    for (const auto& s : steps) {
        length += world::translation_distance(pose, s.action, scene);
        pose = world::kinematics(pose, s.action, scene);
    }
    return length;
}

namespace {

double state_free_length(std::span<const PlanStep> steps) {
    double length = 0.0;
    for (const auto& s : steps) {
        const auto k = s.action.kind;
        if (k == ActionKind::move_forward || k == ActionKind::ascend || k == ActionKind::descend)
            length += s.action.value;
    }
    return length;
}

// Shortest signed rotation in (-pi, pi] from `from` to `to`.
double turn_angle(double from, double to) {
    double d = std::fmod(to - from, world::kTwoPi);
    if (d > kPi) d -= world::kTwoPi;
    if (d <= -kPi) d += world::kTwoPi;
    return d;
}

void push_turn(std::vector<PlanStep>& steps, double& yaw, double desired, int subgoal) {
    desired = world::normalize_yaw(desired);
    const double d = turn_angle(yaw, desired);
    if (std::abs(d) > 1e-9) {
        steps.push_back({d > 0.0 ? Action::turn_left(d) : Action::turn_right(-d), subgoal});
    }
    yaw = desired;
}

double yaw_for(int dx, int dy) {
    if (dx > 0) return 0.0;
    if (dy > 0) return kPi / 2.0;
    if (dx < 0) return kPi;
    return 3.0 * kPi / 2.0;
}

} // namespace

ActionPlan path_to_actions(std::span<const Cell> cells, double initial_yaw, double resolution, int subgoal) {
    ActionPlan plan;
    double yaw = world::normalize_yaw(initial_yaw);
    int run = 0;
    auto flush = [&] {
        if (run > 0) plan.steps.push_back({Action::move_forward(run * resolution), subgoal});
        run = 0;
    };
    for (std::size_t i = 1; i < cells.size(); ++i) {
        const int dx = cells[i].x - cells[i - 1].x;
        const int dy = cells[i].y - cells[i - 1].y;
        const int dz = cells[i].z - cells[i - 1].z;
        if (dz != 0) {
            flush();
            plan.steps.push_back({dz > 0 ? Action::ascend(resolution) : Action::descend(resolution), subgoal});
            continue;
        }
        const double want = yaw_for(dx, dy);
        if (std::abs(turn_angle(yaw, want)) > 1e-9) {
            flush();
            push_turn(plan.steps, yaw, want, subgoal);
        }
        ++run;
    }
    flush();
    plan.estimated_length = state_free_length(plan.steps);
    return plan;
}

std::optional<perception::Detection> best_detection(const language::ObjectRef& ref,
                                                    std::span<const perception::Detection> detections,
                                                    double acceptance_threshold) {
    std::optional<perception::Detection> best;
    for (const auto& d : detections) {
        if (d.label != ref.label || d.confidence < acceptance_threshold) continue;
        if (!best || d.confidence > best->confidence ||
            (d.confidence == best->confidence &&
             (d.range < best->range || (d.range == best->range && d.object_id < best->object_id))))
            best = d;
    }
    return best;
}

std::optional<Cell> nearest_free_cell(const OccupancyGrid& grid, Vec3 p, const std::function<bool(Cell)>& accept) {
    if (grid.size() == 0) return std::nullopt;
    const double res = grid.resolution();
    const Vec3 o = grid.origin();
    auto axis = [&](double v, double origin, int n) {
        const double i = std::floor((v - origin) / res);
        return static_cast<int>(std::clamp(i, 0.0, static_cast<double>(n - 1)));
    };
    const Cell c0{axis(p.x, o.x, grid.nx()), axis(p.y, o.y, grid.ny()), axis(p.z, o.z, grid.nz())};
    const world::Aabb box0 = grid.cell_box(c0);
    const Vec3 clamped{std::clamp(p.x, box0.min.x, box0.max.x), std::clamp(p.y, box0.min.y, box0.max.y),
                       std::clamp(p.z, box0.min.z, box0.max.z)};
    const double slack = world::distance(p, clamped);

    std::optional<Cell> best;
    double best_d2 = std::numeric_limits<double>::infinity();
    auto consider = [&](Cell c) {
        if (!grid.free(c)) return;
        const Vec3 d = grid.center(c) - p;
        const double d2 = d.x * d.x + d.y * d.y + d.z * d.z;
        const bool better = d2 < best_d2 || (d2 == best_d2 && std::tie(c.z, c.x, c.y) < std::tie(best->z, best->x, best->y));
        if (!better || (accept && !accept(c))) return;
        best = c;
        best_d2 = d2;
    };

    const int max_r = std::max({grid.nx(), grid.ny(), grid.nz()});
    for (int r = 0; r <= max_r; ++r) {
        // Every centre on shell r is at least this far from p.
        const double bound = r * res - res / 2.0 - slack;
        if (best && bound > 0.0 && bound * bound > best_d2) break;
        for (int dz = -r; dz <= r; ++dz)
            for (int dy = -r; dy <= r; ++dy) {
                const bool face = std::abs(dz) == r || std::abs(dy) == r;
                for (int dx = -r; dx <= r; dx += (face || r == 0) ? 1 : 2 * r)
                    consider({c0.x + dx, c0.y + dy, c0.z + dz});
            }
    }
    return best;
}

bool landable(const OccupancyGrid& grid, Cell c) {
    for (int z = c.z; z >= 0; --z)
        if (!grid.free({c.x, c.y, z})) return false;
    return true;
}

std::optional<Cell> approach_cell(const OccupancyGrid& grid, language::SubGoalKind kind, Vec3 p,
                                  double fly_over_offset) {
    // Ground-level cells would set the drone down, and the camera barely looks
    // above the horizon, so targets are approached from half a cell above their
    // centre. Landing spots are approached one cell up so they stay in view.
    if (kind == language::SubGoalKind::fly_over) p.z += fly_over_offset;
    if (kind == language::SubGoalKind::land_at)
        return nearest_free_cell(grid, p, [&](Cell c) { return c.z >= 1 && landable(grid, c); });
    const double floor_z = p.z + grid.resolution() / 2.0 - 1e-9;
    return nearest_free_cell(grid, p, [&](Cell c) { return c.z >= 1 && grid.center(c).z >= floor_z; });
}

std::optional<Cell> grounded_target(const language::SubGoal& goal, const world::Pose& pose,
                                    std::span<const perception::Detection> detections,
                                    const PlanningContext& ctx) {
    if (!goal.target) return std::nullopt;
    auto det = best_detection(*goal.target, detections, ctx.config.acceptance_threshold);
    if (!det) return std::nullopt;
    const Vec3 p = perception::detection_position(*det, pose, ctx.camera);
    return approach_cell(ctx.grid, goal.kind, p, ctx.config.fly_over_offset);
}

namespace {

void track_yaw(double& yaw, const Action& a) {
    if (a.kind == world::ActionKind::turn_left) yaw = world::normalize_yaw(yaw + a.value);
    if (a.kind == world::ActionKind::turn_right) yaw = world::normalize_yaw(yaw - a.value);
}

// Moves from `pose` onto the centre of its grid cell, staying inside that cell.
std::vector<PlanStep> snap_to_cell(const world::Pose& pose, Cell cell, const OccupancyGrid& grid, int subgoal,
                                   double& yaw) {
    std::vector<PlanStep> steps;
    const Vec3 c = grid.center(cell);
    const double dz = c.z - pose.position.z;
    if (dz > 1e-9) steps.push_back({Action::ascend(dz), subgoal});
    if (dz < -1e-9) steps.push_back({Action::descend(-dz), subgoal});
    const double dx = c.x - pose.position.x;
    if (std::abs(dx) > 1e-9) {
        push_turn(steps, yaw, dx > 0 ? 0.0 : kPi, subgoal);
        steps.push_back({Action::move_forward(std::abs(dx)), subgoal});
    }
    const double dy = c.y - pose.position.y;
    if (std::abs(dy) > 1e-9) {
        push_turn(steps, yaw, dy > 0 ? kPi / 2.0 : 3.0 * kPi / 2.0, subgoal);
        steps.push_back({Action::move_forward(std::abs(dy)), subgoal});
    }
    return steps;
}

} // namespace

SubgoalResult plan_subgoal(const language::SubGoal& goal, int subgoal_index, const world::Pose& pose,
                           std::span<const perception::Detection> detections, const PlanningContext& ctx) {
    using language::SubGoalKind;
    const world::Scene& scene = ctx.scene;
    const double altitude = pose.position.z - scene.ground();
    Segment seg;
    auto& steps = seg.plan.steps;

    switch (goal.kind) {
    case SubGoalKind::takeoff:
        if (world::is_landed(pose, scene) || std::abs(goal.value - altitude) > 1e-9)
            steps.push_back({Action::takeoff(goal.value), subgoal_index});
        break;
    case SubGoalKind::ascend_to:
    case SubGoalKind::descend_to: {
        const double delta = goal.value - altitude;
        if (delta > 1e-9) steps.push_back({Action::ascend(delta), subgoal_index});
        if (delta < -1e-9) steps.push_back({Action::descend(-delta), subgoal_index});
        break;
    }
    case SubGoalKind::hover:
        steps.push_back({Action::hover(std::max(1, static_cast<int>(std::lround(goal.value)))), subgoal_index});
        break;
    case SubGoalKind::land: steps.push_back({Action::land(), subgoal_index}); break;
    case SubGoalKind::search:
        if (!best_detection(*goal.target, detections, ctx.config.acceptance_threshold)) return NeedsSearch{};
        break;
    case SubGoalKind::navigate_to:
    case SubGoalKind::fly_over:
    case SubGoalKind::land_at: {
        const auto target = grounded_target(goal, pose, detections, ctx);
        if (!target) {
            if (!best_detection(*goal.target, detections, ctx.config.acceptance_threshold)) return NeedsSearch{};
            throw Unreachable("no free cell near the detected target");
        }
        const auto start = ctx.grid.cell_of(pose.position);
        if (!start || !ctx.grid.free(*start)) throw Unreachable("current position is not on a free cell");
        double yaw = pose.yaw;
        steps = snap_to_cell(pose, *start, ctx.grid, subgoal_index, yaw);
        const auto path = shortest_path(ctx.grid, *start, *target, 1);
        auto moves = path_to_actions(path, yaw, ctx.grid.resolution(), subgoal_index);
        steps.insert(steps.end(), moves.steps.begin(), moves.steps.end());
        for (const auto& s : moves.steps) track_yaw(yaw, s.action);
        // Face the detection so it stays in view on arrival.
        const auto det = best_detection(*goal.target, detections, ctx.config.acceptance_threshold);
        const Vec3 seen = perception::detection_position(*det, pose, ctx.camera);
        const Vec3 end = ctx.grid.center(*target);
        if (std::hypot(seen.x - end.x, seen.y - end.y) > ctx.grid.resolution() / 2.0)
            push_turn(steps, yaw, world::normalize_yaw(std::atan2(seen.y - end.y, seen.x - end.x)), subgoal_index);
        if (goal.kind == SubGoalKind::land_at) steps.push_back({Action::land(), subgoal_index});
        seg.target = target;
        break;
    }
    }
    seg.plan.estimated_length = replay_length(pose, steps, scene);
    return seg;
}

ActionPlan assemble_mission(std::span<const ActionPlan> segments, const world::Scene& scene,
                            const world::Pose& start, double clearance) {
    ActionPlan mission;
    for (const auto& s : segments) mission.steps.insert(mission.steps.end(), s.steps.begin(), s.steps.end());
    for (std::size_t i = 1; i < mission.steps.size(); ++i)
        if (mission.steps[i].subgoal < mission.steps[i - 1].subgoal)
            throw ValidationFailure(i, "sub-goal index decreases");

    world::Pose pose = start;
    double length = 0.0;
    for (std::size_t i = 0; i < mission.steps.size(); ++i) {
        try {
            const auto next = world::apply_action(pose, mission.steps[i].action, scene, clearance);
            length += world::translation_distance(pose, mission.steps[i].action, scene);
            pose = next;
        } catch (const Error& e) {
            throw ValidationFailure(i, e.what());
        }
    }
    mission.estimated_length = length;
    return mission;
}

nlohmann::json to_json(const ActionPlan& plan) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : plan.steps) {
        auto j = world::to_json(s.action);
        j["subgoal"] = s.subgoal;
        steps.push_back(std::move(j));
    }
    return {{"schema", "plan/1"}, {"steps", steps}, {"estimated_length", plan.estimated_length}};
}

ActionPlan action_plan_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("schema", "") != "plan/1")
        throw SchemaViolation("plan document must carry \"schema\": \"plan/1\"");
    auto only = [](const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
        if (!j.is_object()) throw SchemaViolation(std::string(what) + " must be an object");
        for (const auto& [k, v] : j.items())
            if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; }))
                throw SchemaViolation(std::string("unknown field '") + k + "' in " + what);
    };
    only(doc, {"schema", "steps", "estimated_length"}, "plan");
    try {
        ActionPlan plan;
        for (const auto& s : doc.at("steps")) {
            only(s, {"action", "args", "subgoal"}, "plan step");
            plan.steps.push_back({world::action_from_json(s), s.at("subgoal").get<int>()});
        }
        plan.estimated_length = doc.at("estimated_length").get<double>();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(e.what());
    }
}

} // namespace uavvln::planner

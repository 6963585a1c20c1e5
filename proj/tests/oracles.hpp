#pragma once

// Independent reference computations used by the tests. They share no code
// with the library beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "uavvln/language.hpp"
#include "uavvln/planner.hpp"
#include "uavvln/world.hpp"

namespace oracle {

using uavvln::planner::Cell;
using uavvln::planner::OccupancyGrid;
using uavvln::world::Aabb;
using uavvln::world::Vec3;

// Exact test by parametric clipping, written independently of the library's slab routine.
inline bool segment_hits_box(Vec3 a, Vec3 b, const Aabb& box) {
    double lo = 0.0, hi = 1.0;
    const double p0[3] = {a.x, a.y, a.z};
    const double d[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
    const double mn[3] = {box.min.x, box.min.y, box.min.z};
    const double mx[3] = {box.max.x, box.max.y, box.max.z};
    for (int k = 0; k < 3; ++k) {
        if (d[k] == 0.0) {
            if (p0[k] < mn[k] || p0[k] > mx[k]) return false;
            continue;
        }
        double t0 = (mn[k] - p0[k]) / d[k];
        double t1 = (mx[k] - p0[k]) / d[k];
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
        if (lo > hi) return false;
    }
    return true;
}

// Cell occupancy straight from the definition: the clearance-inflated cell
// box overlaps an obstacle.
inline bool cell_blocked(const OccupancyGrid& grid, Cell c, const std::vector<Aabb>& obstacles, double clearance) {
    const double h = grid.resolution() / 2.0 + clearance;
    const Vec3 o = grid.origin();
    const double r = grid.resolution();
    const Vec3 m{o.x + (c.x + 0.5) * r, o.y + (c.y + 0.5) * r, o.z + (c.z + 0.5) * r};
    for (const auto& b : obstacles) {
        const bool overlap = m.x - h <= b.max.x && b.min.x <= m.x + h && m.y - h <= b.max.y &&
                             b.min.y <= m.y + h && m.z - h <= b.max.z && b.min.z <= m.z + h;
        if (overlap) return true;
    }
    return false;
}

// Plain breadth-first search over 6-connected free cells; -1 if unreachable.
inline int bfs_hops(const OccupancyGrid& grid, Cell from, Cell to, int min_z = 0) {
    auto ok = [&](Cell c) {
        return c.x >= 0 && c.y >= 0 && c.z >= min_z && c.x < grid.nx() && c.y < grid.ny() && c.z < grid.nz() &&
               !grid.occupied(c);
    };
    if (!ok(from) || !ok(to)) return -1;
    std::vector<int> dist(static_cast<std::size_t>(grid.nx() * grid.ny() * grid.nz()), -1);
    auto idx = [&](Cell c) { return static_cast<std::size_t>((c.z * grid.ny() + c.y) * grid.nx() + c.x); };
    std::deque<Cell> q{from};
    dist[idx(from)] = 0;
    const int dirs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!q.empty()) {
        const Cell c = q.front();
        q.pop_front();
        if (c == to) return dist[idx(c)];
        for (const auto& d : dirs) {
            const Cell n{c.x + d[0], c.y + d[1], c.z + d[2]};
            if (!ok(n) || dist[idx(n)] >= 0) continue;
            dist[idx(n)] = dist[idx(c)] + 1;
            q.push_back(n);
        }
    }
    return -1;
}

// Exhaustive nearest free cell; ties on (squared distance, z, x, y).
template <class Accept>
std::optional<Cell> nearest_free_cell(const OccupancyGrid& grid, Vec3 p, Accept accept) {
    std::optional<Cell> best;
    std::tuple<double, int, int, int> best_key{std::numeric_limits<double>::infinity(), 0, 0, 0};
    for (int z = 0; z < grid.nz(); ++z)
        for (int y = 0; y < grid.ny(); ++y)
            for (int x = 0; x < grid.nx(); ++x) {
                const Cell c{x, y, z};
                if (grid.occupied(c) || !accept(c)) continue;
                const Vec3 m = grid.center(c);
                const double d2 = (m.x - p.x) * (m.x - p.x) + (m.y - p.y) * (m.y - p.y) + (m.z - p.z) * (m.z - p.z);
                const std::tuple<double, int, int, int> key{d2, z, x, y};
                if (!best || key < best_key) {
                    best = c;
                    best_key = key;
                }
            }
    return best;
}

// SPL straight from its definition.
inline double spl(const std::vector<std::tuple<bool, double, double>>& episodes) {
    double sum = 0.0;
    for (const auto& [s, p, l] : episodes) {
        if (!s) continue;
        sum += std::max(p, l) > 0.0 ? l / std::max(p, l) : 1.0;
    }
    return sum / static_cast<double>(episodes.size());
}

// Structural plan invariants checked directly: non-empty, positive scalars,
// at most one landing and only last, TAKEOFF before the first airborne goal.
inline bool plan_well_formed(const uavvln::language::SubGoalPlan& plan, bool starts_landed = true) {
    using uavvln::language::SubGoalKind;
    if (plan.subgoals.empty()) return false;
    int landings = 0;
    bool airborne = !starts_landed;
    for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
        const auto& g = plan.subgoals[i];
        const bool scalar = g.kind == SubGoalKind::takeoff || g.kind == SubGoalKind::ascend_to ||
                            g.kind == SubGoalKind::descend_to || g.kind == SubGoalKind::hover;
        if (scalar && !(g.value > 0.0)) return false;
        const bool targeted = g.kind == SubGoalKind::navigate_to || g.kind == SubGoalKind::fly_over ||
                              g.kind == SubGoalKind::search || g.kind == SubGoalKind::land_at;
        if (targeted && (!g.target || g.target->label.empty())) return false;
        if (g.kind == SubGoalKind::land || g.kind == SubGoalKind::land_at) {
            if (++landings > 1 || i + 1 != plan.subgoals.size()) return false;
        }
        if (g.kind == SubGoalKind::takeoff) airborne = true;
        else if (g.kind != SubGoalKind::land && !airborne) return false;
    }
    return true;
}

} // namespace oracle

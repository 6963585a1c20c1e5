#include "uavvln/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "uavvln/format.hpp"
#include "uavvln/perception.hpp"
#include "uavvln/planner.hpp"
#include "uavvln/rng.hpp"

namespace uavvln::eval {

using executive::EpisodeLog;
using executive::EpisodeSpec;
using language::ObjectRef;
using world::Aabb;
using world::Archetype;
using world::Scene;
using world::SceneObject;
using world::Vec3;

double success_rate(std::span<const EpisodeOutcome> outcomes) {
    if (outcomes.empty()) throw EmptyInput("success_rate needs at least one episode");
    const auto n = std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.success; });
    return static_cast<double>(n) / static_cast<double>(outcomes.size());
}

double spl(std::span<const EpisodeOutcome> outcomes) {
    if (outcomes.empty()) throw EmptyInput("spl needs at least one episode");
    double sum = 0.0;
    for (const auto& o : outcomes) {
        if (!o.success) continue;
        const double denom = std::max(o.path_length, o.optimal_length);
        sum += denom > 0.0 ? o.optimal_length / denom : 1.0;
    }
    return sum / static_cast<double>(outcomes.size());
}

namespace {

std::vector<EpisodeOutcome> outcomes_of(std::span<const EpisodeLog> logs, std::span<const EpisodeSpec> specs) {
    std::vector<EpisodeOutcome> out;
    out.reserve(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i)
        out.push_back({logs[i].outcome.success, logs[i].path_length, specs.empty() ? 0.0 : specs[i].optimal_length});
    return out;
}

} // namespace

double success_rate(std::span<const EpisodeLog> logs) { return success_rate(outcomes_of(logs, {})); }

double spl(std::span<const EpisodeLog> logs, std::span<const EpisodeSpec> specs) {
    if (logs.size() != specs.size()) throw ConfigError("spl needs one spec per log");
    return spl(outcomes_of(logs, specs));
}

// ---------------------------------------------------------------------------
// Scene generation

const std::set<std::string>& archetype_vocabulary(Archetype archetype) {
    static const std::map<Archetype, std::set<std::string>> vocab = {
        {Archetype::warehouse, {"shelf", "pallet", "box", "barrel", "forklift", "suitcase", "bicycle", "chair", "pad"}},
        {Archetype::park, {"tree", "fountain", "bench", "bin", "bicycle", "dog", "pad"}},
        {Archetype::neighborhood, {"house", "car", "mailbox", "fire hydrant", "bicycle", "tree", "pad"}},
        {Archetype::office, {"desk", "chair", "laptop", "plant", "printer", "cabinet", "couch"}},
    };
    return vocab.at(archetype);
}

namespace {

constexpr const char* kPalette[] = {"red", "blue", "green", "yellow", "white", "black", "orange", "gray"};

double tenth(double v) { return std::round(v * 10.0) / 10.0; }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

class Builder {
public:
    Builder(Archetype archetype, std::uint64_t seed, Vec3 extent)
        : rng_(mix_seed(seed, static_cast<std::uint64_t>(archetype) + 1)) {
        scene_.name = std::string(world::to_string(archetype)) + "-" + std::to_string(seed);
        scene_.archetype = archetype;
        scene_.bounds = {{0, 0, 0}, extent};
    }

    Rng& rng() { return rng_; }

    std::string color(const std::string& label) {
        auto& pool = palettes_[label];
        if (pool.empty()) {
            pool.assign(std::begin(kPalette), std::end(kPalette));
            shuffle(pool, rng_);
        }
        std::string c = pool.back();
        pool.pop_back();
        return c;
    }

    void add(const std::string& label, Aabb box, std::set<std::string> attributes, bool obstacle = true) {
        std::string base = label;
        std::replace(base.begin(), base.end(), ' ', '_');
        SceneObject o;
        o.id = base + "_" + std::to_string(++counts_[label]);
        o.label = label;
        o.attributes = std::move(attributes);
        o.aabb = box;
        o.is_obstacle = obstacle;
        scene_.objects.push_back(std::move(o));
    }

    // Horizontal gap of at least `gap` to every placed object.
    bool clear_of(const Aabb& b, double gap) const {
        for (const auto& o : scene_.objects) {
            const bool apart = b.max.x + gap <= o.aabb.min.x || o.aabb.max.x + gap <= b.min.x ||
                               b.max.y + gap <= o.aabb.min.y || o.aabb.max.y + gap <= b.min.y;
            if (!apart) return false;
        }
        return true;
    }

    // Drops `count` copies at random spots inside the xy region.
    int scatter(const std::string& label, Vec3 size, int count, Aabb region, double gap, bool colored,
                std::set<std::string> extra = {}, bool obstacle = true) {
        int placed = 0;
        for (int k = 0; k < count; ++k) {
            for (int attempt = 0; attempt < 400; ++attempt) {
                double sx = size.x;
                double sy = size.y;
                if (rng_.uniform() < 0.5) std::swap(sx, sy);
                const double cx = tenth(rng_.uniform(region.min.x + sx / 2.0, region.max.x - sx / 2.0));
                const double cy = tenth(rng_.uniform(region.min.y + sy / 2.0, region.max.y - sy / 2.0));
                const Aabb box{{cx - sx / 2.0, cy - sy / 2.0, 0.0}, {cx + sx / 2.0, cy + sy / 2.0, size.z}};
                if (!clear_of(box, gap)) continue;
                auto attrs = extra;
                if (colored) attrs.insert(color(label));
                add(label, box, std::move(attrs), obstacle);
                ++placed;
                break;
            }
        }
        return placed;
    }

    Scene finish(double resolution = 0.5) {
        // Land a quarter of the width west of the centre, so central landmarks are in camera range.
        const auto grid = planner::rasterize(scene_, resolution, world::kDefaultClearance);
        const auto& b = scene_.bounds;
        const Vec3 anchor{b.min.x + 0.25 * (b.max.x - b.min.x), 0.5 * (b.min.y + b.max.y), b.min.z};
        const auto cell = planner::nearest_free_cell(grid, anchor, [](planner::Cell c) { return c.z == 0; });
        if (!cell) throw ConfigError("generated scene has no free ground cell");
        scene_.start_pose = {grid.center(*cell), 0.0};
        return std::move(scene_);
    }

    Scene& scene() { return scene_; }

private:
    Scene scene_;
    Rng rng_;
    std::map<std::string, int> counts_;
    std::map<std::string, std::vector<std::string>> palettes_;
};

Scene warehouse(std::uint64_t seed) {
    Builder b(Archetype::warehouse, seed, {30, 20, 8});
    auto& rng = b.rng();
    for (const double y : {5.5, 12.5})
        for (const double x0 : {8.0, 19.0}) {
            const double start = x0 + tenth(rng.uniform(-1.0, 1.0));
            b.add("shelf", {{start, y, 0}, {start + 8.0, y + 1.0, 4.0}}, {"metal", b.color("shelf")});
        }
    const Aabb floor{{1.5, 1.5, 0}, {28.5, 18.5, 0}};
    b.scatter("forklift", {2.2, 1.2, 2.2}, 1, floor, 1.5, true);
    b.scatter("pallet", {1.2, 1.0, 0.15}, 2, floor, 1.5, false, {"wooden"});
    b.scatter("box", {0.6, 0.6, 0.6}, 3, floor, 1.5, true);
    b.scatter("barrel", {0.6, 0.6, 0.9}, 2, floor, 1.5, true);
    b.scatter("suitcase", {0.5, 0.3, 0.7}, 2, floor, 1.5, true);
    b.scatter("bicycle", {1.7, 0.6, 1.0}, 1, floor, 1.5, true);
    b.scatter("chair", {0.5, 0.5, 0.9}, 1, floor, 1.5, true);
    b.scatter("pad", {2.0, 2.0, 0.05}, 1, floor, 1.5, false, {}, false);
    return b.finish();
}

Scene park(std::uint64_t seed) {
    Builder b(Archetype::park, seed, {40, 40, 12});
    auto& rng = b.rng();
    const double fx = tenth(rng.uniform(17.0, 23.0));
    const double fy = tenth(rng.uniform(17.0, 23.0));
    b.add("fountain", {{fx - 1.5, fy - 1.5, 0}, {fx + 1.5, fy + 1.5, 0.8}}, {"white"});
    const Aabb lawn{{1.5, 1.5, 0}, {38.5, 38.5, 0}};
    for (int k = 0; k < 6; ++k) {
        const double h = tenth(rng.uniform(4.0, 6.0));
        b.scatter("tree", {1.6, 1.6, h}, 1, lawn, 2.5, false, {h >= 5.0 ? "tall" : "short"});
    }
    b.scatter("bench", {1.8, 0.6, 0.9}, 3, lawn, 2.0, true, {"wooden"});
    b.scatter("bin", {0.6, 0.6, 1.0}, 2, lawn, 2.0, true);
    b.scatter("bicycle", {1.7, 0.6, 1.0}, 1, lawn, 2.0, true);
    b.scatter("dog", {0.8, 0.3, 0.6}, 1, lawn, 2.0, true);
    b.scatter("pad", {2.0, 2.0, 0.05}, 1, lawn, 2.0, false, {}, false);
    return b.finish();
}

Scene neighborhood(std::uint64_t seed) {
    Builder b(Archetype::neighborhood, seed, {40, 30, 12});
    auto& rng = b.rng();
    for (const double y0 : {1.5, 22.5})
        for (const double x0 : {3.0, 22.0}) {
            const double x = x0 + tenth(rng.uniform(0.0, 6.0));
            b.add("house", {{x, y0, 0}, {x + 8.0, y0 + 6.0, 5.0}}, {b.color("house")});
        }
    const Aabb street{{1.5, 9.5, 0}, {38.5, 20.5, 0}};
    const Aabb yards{{1.5, 1.5, 0}, {38.5, 28.5, 0}};
    b.scatter("car", {4.5, 1.8, 1.4}, 3, street, 1.5, true);
    b.scatter("mailbox", {0.4, 0.4, 1.2}, 3, yards, 1.5, true, {"metal"});
    b.scatter("fire hydrant", {0.3, 0.3, 0.7}, 2, yards, 1.5, true);
    b.scatter("bicycle", {1.7, 0.6, 1.0}, 1, yards, 1.5, true);
    b.scatter("tree", {1.6, 1.6, 5.0}, 2, yards, 2.0, false, {"tall"});
    b.scatter("pad", {2.0, 2.0, 0.05}, 1, street, 1.5, false, {}, false);
    return b.finish();
}

Scene office(std::uint64_t seed) {
    Builder b(Archetype::office, seed, {20, 15, 3});
    auto& rng = b.rng();
    const Aabb floor{{1.5, 1.5, 0}, {18.5, 13.5, 0}};
    b.scatter("desk", {1.6, 0.8, 0.75}, 4, floor, 1.5, true, {"wooden"});
    // A laptop sits towards one end of a desk.
    const auto desks = b.scene().objects;
    if (!desks.empty()) {
        const auto& d = desks[rng.index(desks.size())].aabb;
        Vec3 c = d.center();
        if (d.max.x - d.min.x > d.max.y - d.min.y) c.x += 0.45;
        else c.y += 0.45;
        b.add("laptop", {{c.x - 0.175, c.y - 0.125, d.max.z}, {c.x + 0.175, c.y + 0.125, d.max.z + 0.03}},
              {b.color("laptop")});
    }
    b.scatter("chair", {0.5, 0.5, 0.9}, 4, floor, 1.2, true);
    b.scatter("couch", {2.0, 0.9, 0.8}, 1, floor, 1.2, true);
    b.scatter("cabinet", {1.0, 0.5, 1.8}, 2, floor, 1.2, true, {"metal"});
    b.scatter("plant", {0.5, 0.5, 1.2}, 2, floor, 1.2, true);
    b.scatter("printer", {0.6, 0.5, 1.0}, 1, floor, 1.2, true);
    return b.finish();
}

} // namespace

Scene generate_scene(Archetype archetype, std::uint64_t seed) {
    switch (archetype) {
    case Archetype::warehouse: return warehouse(seed);
    case Archetype::park: return park(seed);
    case Archetype::neighborhood: return neighborhood(seed);
    case Archetype::office: return office(seed);
    }
    throw ConfigError("unknown archetype");
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

std::vector<planner::Cell> goal_region(const planner::OccupancyGrid& grid, const Scene& scene,
                                       const ObjectRef& goal, double radius) {
    std::vector<planner::Cell> region;
    for (const auto& o : scene.objects) {
        if (!perception::matches_ref(o, goal, scene, scene.start_pose)) continue;
        const Vec3 c = o.aabb.center();
        const double res = grid.resolution();
        const Vec3 lo = c - Vec3{radius, radius, radius};
        const auto clampi = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v)), 0, n - 1); };
        const Vec3 org = grid.origin();
        for (int z = clampi((lo.z - org.z) / res, grid.nz()); z <= clampi((c.z + radius - org.z) / res, grid.nz()); ++z)
            for (int y = clampi((lo.y - org.y) / res, grid.ny()); y <= clampi((c.y + radius - org.y) / res, grid.ny());
                 ++y)
                for (int x = clampi((lo.x - org.x) / res, grid.nx());
                     x <= clampi((c.x + radius - org.x) / res, grid.nx()); ++x) {
                    const planner::Cell cell{x, y, z};
                    if (z >= 1 && grid.free(cell) && world::distance(grid.center(cell), c) <= radius)
                        region.push_back(cell);
                }
    }
    std::sort(region.begin(), region.end());
    region.erase(std::unique(region.begin(), region.end()), region.end());
    return region;
}

// Flight stays off the ground layer: a landed start pays one hop to lift off.
std::vector<int> airborne_hops(const planner::OccupancyGrid& grid, std::span<const planner::Cell> region) {
    return planner::hop_distances(grid, region, 1);
}

int hops_from(const planner::OccupancyGrid& grid, const std::vector<int>& hops, planner::Cell start) {
    if (start.z >= 1) return hops[grid.index(start)];
    const planner::Cell up{start.x, start.y, 1};
    if (!grid.free(start) || !grid.free(up) || hops[grid.index(up)] < 0) return -1;
    return hops[grid.index(up)] + 1;
}

double length_from(const planner::OccupancyGrid& grid, const std::vector<int>& hops, Vec3 start) {
    const auto cell = grid.cell_of(start);
    const int h = cell ? hops_from(grid, hops, *cell) : -1;
    if (h < 0) throw planner::Unreachable("goal region unreachable from the start");
    return h * grid.resolution();
}

} // namespace

double optimal_length(const Scene& scene, const ObjectRef& goal, double radius, const planner::PlannerConfig& config) {
    const auto grid = planner::rasterize(scene, config.resolution, config.clearance);
    const auto region = goal_region(grid, scene, goal, radius);
    return length_from(grid, airborne_hops(grid, region), scene.start_pose.position);
}

std::string phrase(const ObjectRef& ref) {
    std::string out = "the ";
    for (const auto& a : ref.attributes) out += a + " ";
    out += ref.label;
    if (ref.relation) {
        out += " near the ";
        for (const auto& a : ref.relation->anchor.attributes) out += a + " ";
        out += ref.relation->anchor.label;
    }
    return out;
}

namespace {

bool is_color(const std::string& a) {
    return std::find(std::begin(kPalette), std::end(kPalette), a) != std::end(kPalette);
}

std::size_t match_count(const Scene& scene, const ObjectRef& ref) {
    return static_cast<std::size_t>(std::count_if(scene.objects.begin(), scene.objects.end(), [&](const auto& o) {
        return perception::matches_ref(o, ref, scene, scene.start_pose);
    }));
}

// Shortest description that singles out `obj`.
std::optional<ObjectRef> unique_ref(const Scene& scene, const SceneObject& obj) {
    ObjectRef ref{obj.label, {}, std::nullopt};
    if (match_count(scene, ref) == 1) return ref;
    for (const auto& a : obj.attributes)
        if (is_color(a)) ref.attributes.insert(a);
    if (!ref.attributes.empty() && match_count(scene, ref) == 1) return ref;
    for (const auto& anchor : scene.objects) {
        if (anchor.id == obj.id || anchor.label == obj.label) continue;
        if (world::distance(anchor.aabb.center(), obj.aabb.center()) > perception::kNearThreshold) continue;
        ObjectRef with = ref;
        with.relation = language::Relation{language::RelationKind::near, {anchor.label, {}}};
        if (match_count(scene, with) == 1) return with;
    }
    return std::nullopt;
}

enum class GoalUse { navigate, low, pad };

struct Candidate {
    const SceneObject* object = nullptr;
    ObjectRef ref;
    GoalUse use = GoalUse::navigate;
};

constexpr const char* kNavigateTemplates[] = {
    "take off, fly to {G}, then land",
    "fly to {G}",
    "take off and navigate to {G}",
    "take off to 3 meters, then go to {G}",
    "take off, search for {G}, then fly to {G}",
    "take off, hover for 2 seconds, then fly to {G} and land",
    "please take off, then head to {G}",
};

constexpr const char* kLowTemplates[] = {
    "fly over {G}",
    "take off, fly over {G}, then land",
};

constexpr const char* kPadTemplates[] = {
    "take off, then land on {G}",
    "land at {G}",
};

std::string fill(std::string text, const std::string& g) {
    for (auto pos = text.find("{G}"); pos != std::string::npos; pos = text.find("{G}"))
        text.replace(pos, 3, g);
    return text;
}

// Whether the approach cell for this goal lies comfortably inside the success radius.
bool well_posed(const Candidate& c, const planner::OccupancyGrid& grid, double radius,
                const planner::PlannerConfig& config) {
    using language::SubGoalKind;
    const Vec3 center = c.object->aabb.center();
    const double limit = radius - 0.3;
    auto close = [&](SubGoalKind kind) {
        const auto cell = planner::approach_cell(grid, kind, center, config.fly_over_offset);
        return cell && world::distance(grid.center(*cell), center) <= limit;
    };
    if (c.use == GoalUse::pad) {
        const auto cell = planner::approach_cell(grid, SubGoalKind::land_at, center, config.fly_over_offset);
        if (!cell) return false;
        const Vec3 above = grid.center(*cell);
        return world::distance(above, center) <= limit && world::distance({above.x, above.y, 0.0}, center) <= limit;
    }
    if (c.use == GoalUse::low && !close(SubGoalKind::fly_over)) return false;
    return close(SubGoalKind::navigate_to);
}

// The goal shows up during the start-of-episode scan at some altitude and heading.
bool seen_from(const Scene& scene, Vec3 ground, const SceneObject& goal, const ObjectRef& ref) {
    const world::CameraModel camera;
    for (double alt = 2.0; alt <= 5.0; alt += 1.0) {
        if (ground.z + alt > scene.bounds.max.z) break;
        for (int k = 0; k < 8; ++k) {
            const world::Pose p{{ground.x, ground.y, ground.z + alt}, k * std::numbers::pi / 4.0};
            for (const auto& s : world::visible_objects(p, camera, scene))
                if (s.object->id == goal.id && perception::matches_ref(goal, ref, scene, p)) return true;
        }
    }
    return false;
}

} // namespace

std::vector<EpisodeSpec> generate_episodes(const Scene& scene, int count, std::uint64_t seed,
                                           const EpisodeOptions& options) {
    Rng rng(mix_seed(seed, 0x657069));
    const auto grid = planner::rasterize(scene, options.planner.resolution, options.planner.clearance);
    const auto& coco = perception::coco_labels();

    std::vector<Candidate> pools[2];  // [0] closed-vocabulary labels, [1] the rest
    for (const auto& o : scene.objects) {
        auto ref = unique_ref(scene, o);
        if (!ref) continue;
        Candidate c{&o, *ref, GoalUse::navigate};
        if (o.label == "pad") c.use = GoalUse::pad;
        else if (o.aabb.max.z - o.aabb.min.z <= 1.5) c.use = GoalUse::low;
        if (c.use == GoalUse::low && !well_posed(c, grid, options.success_radius, options.planner))
            c.use = GoalUse::navigate;
        if (!well_posed(c, grid, options.success_radius, options.planner)) continue;
        pools[coco.contains(o.label) ? 0 : 1].push_back(std::move(c));
    }
    if (pools[0].empty() && pools[1].empty()) throw ConfigError("scene '" + scene.name + "' has no usable goal");

    std::vector<EpisodeSpec> out;
    for (int i = 0; out.size() < static_cast<std::size_t>(count); ++i) {
        if (i > 50 * count) throw ConfigError("could not place episodes in scene '" + scene.name + "'");
        auto& pool = pools[static_cast<std::size_t>(out.size() % 2)].empty() ? pools[1 - out.size() % 2]
                                                                              : pools[out.size() % 2];
        const Candidate& goal = pool[rng.index(pool.size())];

        std::vector<const char*> templates;
        if (goal.use == GoalUse::pad) {
            templates.assign(std::begin(kPadTemplates), std::end(kPadTemplates));
        } else {
            templates.assign(std::begin(kNavigateTemplates), std::end(kNavigateTemplates));
            if (goal.use == GoalUse::low) templates.insert(templates.end(), std::begin(kLowTemplates), std::end(kLowTemplates));
        }
        const std::string text = fill(templates[rng.index(templates.size())], phrase(goal.ref));

        const auto region = goal_region(grid, scene, goal.ref, options.success_radius);
        const auto hops = airborne_hops(grid, region);
        const Vec3 gc = goal.object->aabb.center();
        std::vector<planner::Cell> starts;
        for (int y = 0; y < grid.ny(); ++y)
            for (int x = 0; x < grid.nx(); ++x) {
                const planner::Cell c{x, y, 0};
                if (hops_from(grid, hops, c) < 0) continue;
                const Vec3 p = grid.center(c);
                const double d = std::hypot(p.x - gc.x, p.y - gc.y);
                if (d >= 4.0 && d <= 11.0) starts.push_back(c);
            }
        shuffle(starts, rng);
        std::optional<planner::Cell> start;
        for (std::size_t k = 0; k < starts.size() && k < 40 && !start; ++k)
            if (seen_from(scene, grid.center(starts[k]), *goal.object, goal.ref)) start = starts[k];
        if (!start) continue;

        EpisodeSpec spec;
        spec.scene = scene;
        spec.scene.start_pose = {grid.center(*start), static_cast<double>(rng.index(4)) * std::numbers::pi / 2.0};
        spec.instruction = {text};
        spec.goal = goal.ref;
        spec.success_radius = options.success_radius;
        spec.optimal_length = hops_from(grid, hops, *start) * grid.resolution();
        spec.seed = mix_seed(seed, out.size());
        spec.max_steps = options.max_steps;
        out.push_back(std::move(spec));
    }
    return out;
}

Benchmark make_benchmark(std::span<const Archetype> archetypes, int episodes_per_scene, std::uint64_t seed,
                         const EpisodeOptions& options) {
    Benchmark b;
    for (const auto a : archetypes) {
        const std::uint64_t scene_seed = mix_seed(seed, static_cast<std::uint64_t>(a));
        b.scenes.push_back(generate_scene(a, scene_seed));
        for (auto& e : generate_episodes(b.scenes.back(), episodes_per_scene, scene_seed, options)) {
            b.episodes.push_back(std::move(e));
            b.scene_of.push_back(b.scenes.size() - 1);
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Suites

nlohmann::json to_json(const executive::PipelineConfig& config) {
    const auto& p = config.parser;
    nlohmann::json endpoint;
    if (p.endpoint)
        endpoint = "http://" + p.endpoint->host + ":" + std::to_string(p.endpoint->port) + p.endpoint->path;
    return {{"profile", config.profile.name},
            {"parser", p.kind == executive::ParserVariant::Kind::external_llm ? "external_llm" : "reference"},
            {"endpoint", endpoint},
            {"corruption_rate", p.corruption_rate},
            {"resolution", config.planner.resolution},
            {"clearance", config.planner.clearance},
            {"fly_over_offset", config.planner.fly_over_offset},
            {"acceptance_threshold", config.planner.acceptance_threshold},
            {"camera",
             {{"horizontal_fov", config.camera.horizontal_fov},
              {"vertical_fov", config.camera.vertical_fov},
              {"max_range", config.camera.max_range},
              {"pitch", config.camera.pitch}}},
            {"termination_retries", config.termination_retries}};
}

std::string config_digest(const executive::PipelineConfig& config) { return hex_digest(to_json(config).dump()); }

namespace {

SuiteResult aggregate(const Benchmark& bench, const RowConfig& row, std::span<const EpisodeLog> logs) {
    SuiteResult r;
    r.name = row.name;
    r.config_digest = config_digest(row.pipeline);
    std::vector<std::vector<EpisodeOutcome>> per_scene(bench.scenes.size());
    std::vector<EpisodeOutcome> all;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        const auto& log = logs[i];
        const auto& spec = bench.episodes[i];
        EpisodeResult e;
        e.scene = bench.scene_of[i];
        e.instruction = spec.instruction.text;
        e.outcome = log.outcome.label();
        e.success = log.outcome.success;
        e.path_length = log.path_length;
        e.optimal_length = spec.optimal_length;
        e.steps = log.steps.size();
        e.log_digest = hex_digest(executive::to_jsonl(log));
        r.episodes.push_back(e);
        const EpisodeOutcome o{e.success, e.path_length, e.optimal_length};
        per_scene[e.scene].push_back(o);
        all.push_back(o);
    }
    auto summarize = [](const std::vector<EpisodeOutcome>& v, SceneResult& s) {
        s.episodes = v.size();
        s.successes = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](auto& o) { return o.success; }));
        if (!v.empty()) {
            s.sr = success_rate(v);
            s.spl = spl(v);
        }
    };
    for (std::size_t s = 0; s < bench.scenes.size(); ++s) {
        SceneResult sr;
        sr.scene = bench.scenes[s].name;
        sr.archetype = world::to_string(bench.scenes[s].archetype);
        summarize(per_scene[s], sr);
        r.scenes.push_back(sr);
    }
    r.overall.scene = "overall";
    summarize(all, r.overall);
    return r;
}

std::vector<planner::OccupancyGrid> grids_for(const Benchmark& bench, const RowConfig& row) {
    std::vector<planner::OccupancyGrid> grids;
    for (const auto& s : bench.scenes)
        grids.push_back(planner::rasterize(s, row.pipeline.planner.resolution, row.pipeline.planner.clearance));
    return grids;
}

} // namespace

SuiteResult run_suite(const Benchmark& bench, const RowConfig& row) {
    const auto grids = grids_for(bench, row);
    const auto n = static_cast<std::ptrdiff_t>(bench.episodes.size());
    std::vector<EpisodeLog> logs(bench.episodes.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            logs[k] = executive::run_episode(bench.episodes[k], row.pipeline, grids[bench.scene_of[k]]);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return aggregate(bench, row, logs);
}

SuiteResult run_suite_serial(const Benchmark& bench, const RowConfig& row) {
    const auto grids = grids_for(bench, row);
    std::vector<EpisodeLog> logs;
    for (std::size_t i = 0; i < bench.episodes.size(); ++i)
        logs.push_back(executive::run_episode(bench.episodes[i], row.pipeline, grids[bench.scene_of[i]]));
    return aggregate(bench, row, logs);
}

std::vector<SuiteResult> ablation_matrix(const Benchmark& bench, std::span<const RowConfig> rows) {
    if (rows.empty()) throw ConfigError("ablation needs at least one row");
    std::vector<SuiteResult> out;
    for (const auto& row : rows) out.push_back(run_suite(bench, row));
    return out;
}

namespace {

nlohmann::json scene_json(const SceneResult& s) {
    return {{"scene", s.scene},   {"archetype", s.archetype}, {"episodes", s.episodes},
            {"successes", s.successes}, {"sr", s.sr}, {"spl", s.spl}};
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad_right(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

} // namespace

nlohmann::json to_json(const SuiteResult& result) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& s : result.scenes) scenes.push_back(scene_json(s));
    nlohmann::json episodes = nlohmann::json::array();
    for (const auto& e : result.episodes)
        episodes.push_back({{"scene", e.scene},
                            {"instruction", e.instruction},
                            {"outcome", e.outcome},
                            {"path_length", e.path_length},
                            {"optimal_length", e.optimal_length},
                            {"steps", e.steps},
                            {"log_digest", e.log_digest}});
    return {{"schema", "suite_result/1"}, {"name", result.name},           {"config_digest", result.config_digest},
            {"scenes", scenes},           {"overall", scene_json(result.overall)}, {"episodes", episodes}};
}

std::string format_table(std::span<const SuiteResult> results) {
    if (results.empty()) return "";
    std::size_t name_w = 6;
    for (const auto& r : results) name_w = std::max(name_w, r.name.size());
    name_w += 2;
    const std::size_t col_w = 18;
    std::string head = pad_right("Method", name_w);
    std::string sub = pad_right("", name_w);
    for (const auto& s : results.front().scenes) {
        std::string title = s.archetype;
        if (!title.empty()) title[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(title[0])));
        head += pad_right(title, col_w);
        sub += pad_right("SR(%)    SPL", col_w);
    }
    head += "Overall";
    sub += "SR(%)    SPL";
    std::string out = head + "\n" + sub + "\n";
    for (const auto& r : results) {
        std::string line = pad_right(r.name, name_w);
        for (const auto& s : r.scenes) line += pad_right(pad_right(fixed(100.0 * s.sr, 2), 9) + fixed(s.spl, 4), col_w);
        line += pad_right(fixed(100.0 * r.overall.sr, 2), 9) + fixed(r.overall.spl, 4);
        out += line + "\n";
    }
    return out;
}

std::string to_csv(std::span<const SuiteResult> results) {
    std::string out = "row,scene,episodes,successes,sr,spl\n";
    auto line = [&](const SuiteResult& r, const SceneResult& s) {
        out += r.name + "," + s.scene + "," + std::to_string(s.episodes) + "," + std::to_string(s.successes) + "," +
               fixed(s.sr, 4) + "," + fixed(s.spl, 4) + "\n";
    };
    for (const auto& r : results) {
        for (const auto& s : r.scenes) line(r, s);
        line(r, r.overall);
    }
    return out;
}

// ---------------------------------------------------------------------------
// suite/1 configuration

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            throw ConfigError(what + " has unknown field '" + key + "'");
}

void apply_pipeline(const nlohmann::json& j, executive::PipelineConfig& p) {
    if (j.contains("profile")) p.profile = perception::profile_by_name(j.at("profile").get<std::string>());
    if (j.contains("parser")) {
        const auto kind = j.at("parser").get<std::string>();
        if (kind == "reference") p.parser.kind = executive::ParserVariant::Kind::reference;
        else if (kind == "external_llm") p.parser.kind = executive::ParserVariant::Kind::external_llm;
        else throw ConfigError("parser must be \"reference\" or \"external_llm\"");
    }
    if (j.contains("endpoint")) {
        const auto timeout = std::chrono::milliseconds(j.value("timeout_ms", 5000));
        p.parser.endpoint = remote::parse_endpoint(j.at("endpoint").get<std::string>(), timeout);
    }
    if (j.contains("corruption_rate")) {
        p.parser.corruption_rate = j.at("corruption_rate").get<double>();
        if (!(p.parser.corruption_rate >= 0.0 && p.parser.corruption_rate <= 1.0))
            throw ConfigError("corruption_rate must lie in [0, 1]");
    }
    if (j.contains("resolution")) p.planner.resolution = j.at("resolution").get<double>();
    if (j.contains("clearance")) p.planner.clearance = j.at("clearance").get<double>();
    if (!(p.planner.resolution > 0.0) || !(p.planner.clearance >= 0.0))
        throw ConfigError("resolution must be positive and clearance non-negative");
    if (p.parser.kind == executive::ParserVariant::Kind::external_llm && !p.parser.endpoint)
        throw ConfigError("external_llm parser needs an endpoint");
}

#define UAVVLN_PIPELINE_KEYS "profile", "parser", "endpoint", "timeout_ms", "corruption_rate", "resolution", "clearance"

} // namespace

SuiteConfig suite_config_from_json(const nlohmann::json& doc) {
    try {
        reject_unknown(doc,
                       {"schema", "name", "seed", "archetypes", "episodes_per_scene", "success_radius", "max_steps",
                        "pipeline", "rows"},
                       "suite config");
        if (!doc.contains("schema") || doc.at("schema") != "suite/1")
            throw ConfigError("suite config must carry \"schema\": \"suite/1\"");
        SuiteConfig c;
        c.name = doc.value("name", std::string("suite"));
        c.seed = doc.value("seed", std::uint64_t{0});
        if (doc.contains("archetypes")) {
            for (const auto& a : doc.at("archetypes")) c.archetypes.push_back(world::archetype_from_string(a.get<std::string>()));
        } else {
            c.archetypes = {Archetype::warehouse, Archetype::park, Archetype::neighborhood, Archetype::office};
        }
        if (c.archetypes.empty()) throw ConfigError("archetypes must not be empty");
        c.episodes_per_scene = doc.value("episodes_per_scene", 15);
        if (c.episodes_per_scene <= 0) throw ConfigError("episodes_per_scene must be positive");
        c.episode.success_radius = doc.value("success_radius", executive::kDefaultSuccessRadius);
        c.episode.max_steps = doc.value("max_steps", 400);
        if (!(c.episode.success_radius > 0.0) || c.episode.max_steps <= 0)
            throw ConfigError("success_radius and max_steps must be positive");
        c.base.name = c.name;
        if (doc.contains("pipeline")) {
            reject_unknown(doc.at("pipeline"), {UAVVLN_PIPELINE_KEYS}, "pipeline");
            apply_pipeline(doc.at("pipeline"), c.base.pipeline);
        }
        c.episode.planner.resolution = c.base.pipeline.planner.resolution;
        c.episode.planner.clearance = c.base.pipeline.planner.clearance;
        if (doc.contains("rows")) {
            if (!doc.at("rows").is_array()) throw ConfigError("rows must be an array");
            c.rows_given = true;
            for (const auto& jr : doc.at("rows")) {
                reject_unknown(jr, {"name", UAVVLN_PIPELINE_KEYS}, "row");
                RowConfig row = c.base;
                row.name = jr.at("name").get<std::string>();
                apply_pipeline(jr, row.pipeline);
                c.rows.push_back(std::move(row));
            }
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed suite config: ") + e.what());
    }
}

SuiteConfig load_suite_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open suite config '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("suite config '" + path + "' is not JSON: " + e.what());
    }
    return suite_config_from_json(doc);
}

} // namespace uavvln::eval

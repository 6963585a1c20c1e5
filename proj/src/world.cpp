#include "uavvln/world.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>

#include "uavvln/format.hpp"

namespace uavvln::world {

namespace {

constexpr double kLandedTolerance = 1e-9;
constexpr double kSnapTolerance = 1e-9;

// Entry parameter t in [0,1] of segment a->b into a closed box, if it touches.
std::optional<double> segment_box_entry(Vec3 a, Vec3 b, const Aabb& box) {
    double t0 = 0.0;
    double t1 = 1.0;
    const double origin[3] = {a.x, a.y, a.z};
    const double delta[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
    const double lo[3] = {box.min.x, box.min.y, box.min.z};
    const double hi[3] = {box.max.x, box.max.y, box.max.z};
    for (int axis = 0; axis < 3; ++axis) {
        if (delta[axis] == 0.0) {
            if (origin[axis] < lo[axis] || origin[axis] > hi[axis]) return std::nullopt;
            continue;
        }
        double ta = (lo[axis] - origin[axis]) / delta[axis];
        double tb = (hi[axis] - origin[axis]) / delta[axis];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return t0;
}

} // namespace

bool segment_intersects_box(Vec3 a, Vec3 b, const Aabb& box) {
    return segment_box_entry(a, b, box).has_value();
}

double normalize_yaw(double yaw) {
    double y = std::fmod(yaw, kTwoPi);
    if (y < 0.0) y += kTwoPi;
    const double quarter = kPi / 2.0;
    const double k = std::round(y / quarter);
    if (std::abs(y - k * quarter) < kSnapTolerance) {
        static constexpr double kCardinal[] = {0.0, kPi / 2.0, kPi, 3.0 * kPi / 2.0, 0.0};
        return kCardinal[static_cast<int>(k)];
    }
    if (y >= kTwoPi) y = 0.0;
    return y;
}

Vec3 heading(double yaw) {
    const double y = normalize_yaw(yaw);
    if (y == 0.0) return {1.0, 0.0, 0.0};
    if (y == kPi / 2.0) return {0.0, 1.0, 0.0};
    if (y == kPi) return {-1.0, 0.0, 0.0};
    if (y == 3.0 * kPi / 2.0) return {0.0, -1.0, 0.0};
    return {std::cos(y), std::sin(y), 0.0};
}

std::string_view to_string(Archetype a) {
    switch (a) {
    case Archetype::warehouse: return "warehouse";
    case Archetype::park: return "park";
    case Archetype::neighborhood: return "neighborhood";
    case Archetype::office: return "office";
    }
    return "park";
}

Archetype archetype_from_string(std::string_view s) {
    if (s == "warehouse") return Archetype::warehouse;
    if (s == "park") return Archetype::park;
    if (s == "neighborhood") return Archetype::neighborhood;
    if (s == "office") return Archetype::office;
    throw ConfigError("unknown archetype '" + std::string(s) + "'");
}

const SceneObject* Scene::find(std::string_view id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

std::vector<std::string> Scene::vocabulary() const {
    std::set<std::string> labels;
    for (const auto& o : objects) labels.insert(o.label);
    return {labels.begin(), labels.end()};
}

std::string_view to_string(ActionKind k) {
    switch (k) {
    case ActionKind::takeoff: return "TAKEOFF";
    case ActionKind::land: return "LAND";
    case ActionKind::hover: return "HOVER";
    case ActionKind::move_forward: return "MOVE_FORWARD";
    case ActionKind::turn_left: return "TURN_LEFT";
    case ActionKind::turn_right: return "TURN_RIGHT";
    case ActionKind::ascend: return "ASCEND";
    case ActionKind::descend: return "DESCEND";
    }
    return "HOVER";
}

ActionKind action_kind_from_string(std::string_view s) {
    for (ActionKind k : kAllActionKinds)
        if (to_string(k) == s) return k;
    throw SchemaViolation("unknown action kind '" + std::string(s) + "'");
}

bool Action::valid() const {
    if (kind == ActionKind::land) return true;
    if (!std::isfinite(value) || value <= 0.0) return false;
    if (kind == ActionKind::hover) return value == std::floor(value);
    return true;
}

std::string describe(const Action& a) {
    if (a.kind == ActionKind::land) return "LAND";
    return std::string(to_string(a.kind)) + "(" + format_number(a.value) + ")";
}

bool is_landed(const Pose& pose, const Scene& scene) {
    return pose.position.z <= scene.ground() + kLandedTolerance;
}

const SceneObject* first_obstacle_hit(Vec3 a, Vec3 b, const Scene& scene, double clearance) {
    const SceneObject* hit = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : scene.objects) {
        if (!o.is_obstacle) continue;
        if (auto t = segment_box_entry(a, b, o.aabb.inflated(clearance)); t && *t < best) {
            best = *t;
            hit = &o;
        }
    }
    return hit;
}

namespace {

Vec3 target_position(const Pose& pose, const Action& action, const Scene& scene) {
    Vec3 p = pose.position;
    switch (action.kind) {
    case ActionKind::takeoff: p.z = scene.ground() + action.value; break;
    case ActionKind::land: p.z = scene.ground(); break;
    case ActionKind::move_forward: p = p + heading(pose.yaw) * action.value; break;
    case ActionKind::ascend: p.z += action.value; break;
    case ActionKind::descend: p.z -= action.value; break;
    case ActionKind::hover:
    case ActionKind::turn_left:
    case ActionKind::turn_right: break;
    }
    return p;
}

} // namespace

Pose apply_action(const Pose& pose, const Action& action, const Scene& scene, double clearance) {
    if (!action.valid()) throw Error("invalid action " + describe(action));
    if (is_landed(pose, scene) && action.kind != ActionKind::takeoff &&
        action.kind != ActionKind::land)
        throw InvalidFromGround(describe(action) + " while landed");

    const Pose next = kinematics(pose, action, scene);
    if (!next.position.finite() || !scene.bounds.contains(next.position))
        throw OutOfBoundsError(describe(action) + " leaves scene bounds");
    if (next.position != pose.position) {
        if (const auto* hit = first_obstacle_hit(pose.position, next.position, scene, clearance))
            throw CollisionError(hit->id);
    }
    return next;
}

Pose kinematics(const Pose& pose, const Action& action, const Scene& scene) {
    Pose next = pose;
    if (action.kind == ActionKind::turn_left) next.yaw = normalize_yaw(pose.yaw + action.value);
    if (action.kind == ActionKind::turn_right) next.yaw = normalize_yaw(pose.yaw - action.value);
    if (action.kind == ActionKind::land && is_landed(pose, scene)) return next;
    next.position = target_position(pose, action, scene);
    return next;
}

double translation_distance(const Pose& pose, const Action& action, const Scene& scene) {
    return distance(pose.position, kinematics(pose, action, scene).position);
}

std::optional<Sighting> camera_angles(const Pose& pose, const CameraModel& camera, Vec3 target) {
    const Vec3 d = target - pose.position;
    const double range = d.norm();
    if (range < 1e-9) return std::nullopt;
    const Vec3 f = heading(pose.yaw);
    const double along = d.x * f.x + d.y * f.y;
    const double left = -d.x * f.y + d.y * f.x;
    const double cp = std::cos(camera.pitch);
    const double sp = std::sin(camera.pitch);
    const double fwd = along * cp + d.z * sp;
    const double up = -along * sp + d.z * cp;
    Sighting s;
    s.bearing = std::atan2(left, fwd);
    s.elevation = std::atan2(up, std::hypot(fwd, left));
    s.range = range;
    return s;
}

Vec3 camera_to_world(const Pose& pose, const CameraModel& camera, double bearing, double elevation,
                     double range) {
    const double horiz = range * std::cos(elevation);
    const double fwd = horiz * std::cos(bearing);
    const double left = horiz * std::sin(bearing);
    const double up = range * std::sin(elevation);
    const double cp = std::cos(camera.pitch);
    const double sp = std::sin(camera.pitch);
    const double along = fwd * cp - up * sp;
    const double dz = fwd * sp + up * cp;
    const Vec3 f = heading(pose.yaw);
    return {pose.position.x + along * f.x - left * f.y, pose.position.y + along * f.y + left * f.x,
            pose.position.z + dz};
}

std::vector<Sighting> visible_objects(const Pose& pose, const CameraModel& camera,
                                      const Scene& scene) {
    std::vector<Sighting> out;
    for (const auto& obj : scene.objects) {
        const Vec3 center = obj.aabb.center();
        auto s = camera_angles(pose, camera, center);
        if (!s) continue;
        if (std::abs(s->bearing) > camera.horizontal_fov / 2.0) continue;
        if (std::abs(s->elevation) > camera.vertical_fov / 2.0) continue;
        if (s->range > camera.max_range) continue;

        bool blocked = false;
        for (int i = 0; i < kOcclusionSamples && !blocked; ++i) {
            const double t = static_cast<double>(i + 1) / (kOcclusionSamples + 1);
            const Vec3 p = pose.position + (center - pose.position) * t;
            for (const auto& other : scene.objects) {
                if (&other == &obj || !other.is_obstacle) continue;
                if (other.aabb.contains(p)) {
                    blocked = true;
                    break;
                }
            }
        }
        if (blocked) continue;
        s->object = &obj;
        out.push_back(*s);
    }
    std::sort(out.begin(), out.end(), [](const Sighting& a, const Sighting& b) {
        if (a.range != b.range) return a.range < b.range;
        return a.object->id < b.object->id;
    });
    return out;
}

namespace {

bool is_lowercase(const std::string& s) {
    return std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isupper(c); });
}

bool finite_box(const Aabb& b) { return b.min.finite() && b.max.finite(); }

} // namespace

std::vector<std::string> validate_scene(const Scene& scene, double clearance) {
    std::vector<std::string> v;
    if (!finite_box(scene.bounds) || !scene.bounds.well_formed())
        v.push_back("scene bounds are not a well-formed box");

    std::map<std::string, int> seen;
    for (const auto& o : scene.objects) {
        const std::string tag = "object '" + o.id + "'";
        if (o.id.empty()) v.push_back("object with empty id");
        if (++seen[o.id] > 1) v.push_back(tag + ": duplicate id");
        if (o.label.empty()) v.push_back(tag + ": empty label");
        else if (!is_lowercase(o.label)) v.push_back(tag + ": label is not lowercase");
        for (const auto& a : o.attributes)
            if (!is_lowercase(a)) v.push_back(tag + ": attribute '" + a + "' is not lowercase");
        if (!finite_box(o.aabb) || !o.aabb.well_formed())
            v.push_back(tag + ": box min exceeds max");
        else if (!scene.bounds.contains(o.aabb))
            v.push_back(tag + ": box outside scene bounds");
    }

    const Pose& s = scene.start_pose;
    if (!s.position.finite() || !std::isfinite(s.yaw) || s.yaw < 0.0 || s.yaw >= kTwoPi)
        v.push_back("start pose is not finite or yaw outside [0, 2pi)");
    else if (!scene.bounds.contains(s.position))
        v.push_back("start pose outside scene bounds");
    else if (const auto* hit = first_obstacle_hit(s.position, s.position, scene, clearance))
        v.push_back("start pose collides with object '" + hit->id + "'");
    return v;
}

nlohmann::json to_json(const Vec3& v) { return {{"x", v.x}, {"y", v.y}, {"z", v.z}}; }

nlohmann::json to_json(const Pose& p) { return {{"position", to_json(p.position)}, {"yaw", p.yaw}}; }

namespace {

nlohmann::json box_json(const Aabb& b) { return {{"min", to_json(b.min)}, {"max", to_json(b.max)}}; }

Vec3 vec_from_json(const nlohmann::json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
}

Aabb box_from_json(const nlohmann::json& j) {
    return {vec_from_json(j.at("min")), vec_from_json(j.at("max"))};
}

} // namespace

Pose pose_from_json(const nlohmann::json& j) {
    try {
        return {vec_from_json(j.at("position")), j.at("yaw").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(std::string("malformed pose: ") + e.what());
    }
}

nlohmann::json to_json(const Scene& scene) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"id", o.id},
                           {"label", o.label},
                           {"attributes", o.attributes},
                           {"aabb", box_json(o.aabb)},
                           {"is_obstacle", o.is_obstacle}});
    }
    return {{"schema", "scene/1"},
            {"name", scene.name},
            {"archetype", to_string(scene.archetype)},
            {"bounds", box_json(scene.bounds)},
            {"start_pose", to_json(scene.start_pose)},
            {"objects", objects}};
}

Scene scene_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("schema") || doc.at("schema") != "scene/1")
        throw ConfigError("scene document must carry \"schema\": \"scene/1\"");
    try {
        Scene s;
        s.name = doc.at("name").get<std::string>();
        s.archetype = archetype_from_string(doc.at("archetype").get<std::string>());
        s.bounds = box_from_json(doc.at("bounds"));
        const auto& sp = doc.at("start_pose");
        s.start_pose = {vec_from_json(sp.at("position")), sp.at("yaw").get<double>()};
        for (const auto& jo : doc.at("objects")) {
            SceneObject o;
            o.id = jo.at("id").get<std::string>();
            o.label = jo.at("label").get<std::string>();
            o.attributes = jo.value("attributes", std::set<std::string>{});
            o.aabb = box_from_json(jo.at("aabb"));
            o.is_obstacle = jo.at("is_obstacle").get<bool>();
            s.objects.push_back(std::move(o));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scene document: ") + e.what());
    }
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scene file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scene file '" + path + "' is not JSON: " + e.what());
    }
    return scene_from_json(doc);
}

void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write scene file '" + path + "'");
    out << to_json(scene).dump(2) << '\n';
}

nlohmann::json to_json(const Action& a) {
    nlohmann::json args = nlohmann::json::object();
    switch (a.kind) {
    case ActionKind::takeoff: args["alt"] = a.value; break;
    case ActionKind::hover: args["steps"] = static_cast<int>(a.value); break;
    case ActionKind::turn_left:
    case ActionKind::turn_right: args["theta"] = a.value; break;
    case ActionKind::move_forward:
    case ActionKind::ascend:
    case ActionKind::descend: args["d"] = a.value; break;
    case ActionKind::land: break;
    }
    return {{"action", to_string(a.kind)}, {"args", args}};
}

Action action_from_json(const nlohmann::json& j) {
    try {
        Action a;
        a.kind = action_kind_from_string(j.at("action").get<std::string>());
        const auto& args = j.at("args");
        switch (a.kind) {
        case ActionKind::takeoff: a.value = args.at("alt").get<double>(); break;
        case ActionKind::hover: a.value = args.at("steps").get<int>(); break;
        case ActionKind::turn_left:
        case ActionKind::turn_right: a.value = args.at("theta").get<double>(); break;
        case ActionKind::move_forward:
        case ActionKind::ascend:
        case ActionKind::descend: a.value = args.at("d").get<double>(); break;
        case ActionKind::land: a.value = 0.0; break;
        }
        if (!a.valid()) throw SchemaViolation("action parameters must be positive");
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(std::string("malformed action: ") + e.what());
    }
}

} // namespace uavvln::world

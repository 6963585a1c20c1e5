#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "uavvln/errors.hpp"

namespace uavvln::world {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDefaultClearance = 0.3;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(Vec3 a, Vec3 b) { return (a - b).norm(); }

struct Aabb {
    Vec3 min;
    Vec3 max;

    Vec3 center() const { return (min + max) * 0.5; }
    bool well_formed() const { return min.x <= max.x && min.y <= max.y && min.z <= max.z; }
    bool contains(Vec3 p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
               p.z <= max.z;
    }
    bool contains(const Aabb& b) const { return contains(b.min) && contains(b.max); }
    // Closed-interval overlap: touching boxes intersect.
    bool intersects(const Aabb& b) const {
        return min.x <= b.max.x && b.min.x <= max.x && min.y <= b.max.y && b.min.y <= max.y &&
               min.z <= b.max.z && b.min.z <= max.z;
    }
    Aabb inflated(double r) const { return {min - Vec3{r, r, r}, max + Vec3{r, r, r}}; }
    friend bool operator==(const Aabb&, const Aabb&) = default;
};

// Closed segment vs closed box (slab method).
bool segment_intersects_box(Vec3 a, Vec3 b, const Aabb& box);

// Wraps an angle into [0, 2pi); values within 1e-9 of a multiple of pi/2 snap onto it.
double normalize_yaw(double yaw);

struct Pose {
    Vec3 position;
    double yaw = 0.0;  // radians in [0, 2pi), counter-clockwise from +x
    friend bool operator==(const Pose&, const Pose&) = default;
};

// Unit heading vector in the horizontal plane; exact for cardinal yaws.
Vec3 heading(double yaw);

enum class Archetype { warehouse, park, neighborhood, office };

std::string_view to_string(Archetype a);
Archetype archetype_from_string(std::string_view s);

struct SceneObject {
    std::string id;
    std::string label;
    std::set<std::string> attributes;
    Aabb aabb;
    bool is_obstacle = false;
    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
    std::string name;
    Aabb bounds;
    std::vector<SceneObject> objects;
    Pose start_pose;
    Archetype archetype = Archetype::park;

    double ground() const { return bounds.min.z; }
    const SceneObject* find(std::string_view id) const;
    // Sorted unique labels.
    std::vector<std::string> vocabulary() const;
    friend bool operator==(const Scene&, const Scene&) = default;
};

// Discrete action space.
enum class ActionKind { takeoff, land, hover, move_forward, turn_left, turn_right, ascend, descend };

inline constexpr ActionKind kAllActionKinds[] = {
    ActionKind::takeoff,    ActionKind::land,       ActionKind::hover,  ActionKind::move_forward,
    ActionKind::turn_left,  ActionKind::turn_right, ActionKind::ascend, ActionKind::descend,
};

std::string_view to_string(ActionKind k);
ActionKind action_kind_from_string(std::string_view s);

struct Action {
    ActionKind kind = ActionKind::hover;
    // alt for TAKEOFF, d for MOVE/ASCEND/DESCEND, theta for TURN, steps for HOVER; unused for LAND.
    double value = 1.0;

    static Action takeoff(double alt) { return {ActionKind::takeoff, alt}; }
    static Action land() { return {ActionKind::land, 0.0}; }
    static Action hover(int steps) { return {ActionKind::hover, static_cast<double>(steps)}; }
    static Action move_forward(double d) { return {ActionKind::move_forward, d}; }
    static Action turn_left(double theta) { return {ActionKind::turn_left, theta}; }
    static Action turn_right(double theta) { return {ActionKind::turn_right, theta}; }
    static Action ascend(double d) { return {ActionKind::ascend, d}; }
    static Action descend(double d) { return {ActionKind::descend, d}; }

    bool valid() const;
    friend bool operator==(const Action&, const Action&) = default;
};

std::string describe(const Action& a);

struct CameraModel {
    double horizontal_fov = 100.0 * kPi / 180.0;
    double vertical_fov = 100.0 * kPi / 180.0;
    double max_range = 15.0;
    double pitch = -45.0 * kPi / 180.0;  // negative looks down
};

class CollisionError : public Error {
public:
    explicit CollisionError(std::string object_id)
        : Error("collision with obstacle '" + object_id + "'"), object_id_(std::move(object_id)) {}
    const std::string& object_id() const { return object_id_; }

private:
    std::string object_id_;
};

class OutOfBoundsError : public Error {
public:
    using Error::Error;
};

class InvalidFromGround : public Error {
public:
    using Error::Error;
};

bool is_landed(const Pose& pose, const Scene& scene);

// Straight-line kinematics for one discrete action. Throws CollisionError,
// OutOfBoundsError or InvalidFromGround.
Pose apply_action(const Pose& pose, const Action& action, const Scene& scene,
                  double clearance = kDefaultClearance);

// Pose after `action` under straight-line kinematics, without any checks.
Pose kinematics(const Pose& pose, const Action& action, const Scene& scene);

// Distance travelled by the position when `action` is applied at `pose`.
double translation_distance(const Pose& pose, const Action& action, const Scene& scene);

// First obstacle hit by the clearance-inflated sweep from a to b, if any.
const SceneObject* first_obstacle_hit(Vec3 a, Vec3 b, const Scene& scene, double clearance);

struct Sighting {
    const SceneObject* object = nullptr;
    double bearing = 0.0;    // positive to the left of the optical axis
    double elevation = 0.0;  // positive above the optical axis
    double range = 0.0;
};

// Camera-frame angles of a world point; nullopt if the point coincides with the camera.
std::optional<Sighting> camera_angles(const Pose& pose, const CameraModel& camera, Vec3 target);

// Inverse of camera_angles.
Vec3 camera_to_world(const Pose& pose, const CameraModel& camera, double bearing, double elevation,
                     double range);

inline constexpr int kOcclusionSamples = 16;

// Objects whose center is inside the frustum and not hidden behind an obstacle,
// sorted by range then id.
std::vector<Sighting> visible_objects(const Pose& pose, const CameraModel& camera,
                                      const Scene& scene);

std::vector<std::string> validate_scene(const Scene& scene,
                                        double clearance = kDefaultClearance);

// scene/1 JSON document.
nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& doc);
Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);

nlohmann::json to_json(const Vec3& v);
nlohmann::json to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Action& a);
Action action_from_json(const nlohmann::json& j);

} // namespace uavvln::world

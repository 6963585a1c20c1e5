#include "uavvln/perception.hpp"

#include <algorithm>
#include <cmath>

#include "uavvln/rng.hpp"

namespace uavvln::perception {

const std::set<std::string>& coco_labels() {
    static const std::set<std::string> labels = {
        "person",       "bicycle",      "car",           "motorcycle",    "airplane",   "bus",
        "train",        "truck",        "boat",          "traffic light", "fire hydrant", "stop sign",
        "parking meter", "bench",       "bird",          "cat",           "dog",        "horse",
        "sheep",        "cow",          "elephant",      "bear",          "zebra",      "giraffe",
        "backpack",     "umbrella",     "handbag",       "tie",           "suitcase",   "frisbee",
        "skis",         "snowboard",    "sports ball",   "kite",          "baseball bat", "baseball glove",
        "skateboard",   "surfboard",    "tennis racket", "bottle",        "wine glass", "cup",
        "fork",         "knife",        "spoon",         "bowl",          "banana",     "apple",
        "sandwich",     "orange",       "broccoli",      "carrot",        "hot dog",    "pizza",
        "donut",        "cake",         "chair",         "couch",         "potted plant", "bed",
        "dining table", "toilet",       "tv",            "laptop",        "mouse",      "remote",
        "keyboard",     "cell phone",   "microwave",     "oven",          "toaster",    "sink",
        "refrigerator", "book",         "clock",         "vase",          "scissors",   "teddy bear",
        "hair drier",   "toothbrush",
    };
    return labels;
}

FidelityProfile oracle_profile() { return {"ORACLE", Vocabulary::open, {}, 0.0, 0.0, 0.0, 1.0}; }

FidelityProfile closed_vocab_80_profile() {
    return {"CLOSED_VOCAB_80", Vocabulary::closed, coco_labels(), 0.1, 0.02, 0.02, 0.8};
}

FidelityProfile open_vocab_coarse_profile() {
    return {"OPEN_VOCAB_COARSE", Vocabulary::open, {}, 0.15, 0.15, 0.05, 0.6};
}

FidelityProfile open_vocab_precise_profile() {
    return {"OPEN_VOCAB_PRECISE", Vocabulary::open, {}, 0.05, 0.03, 0.02, 0.85};
}

FidelityProfile profile_by_name(const std::string& name) {
    for (auto make : {oracle_profile, closed_vocab_80_profile, open_vocab_coarse_profile,
                      open_vocab_precise_profile}) {
        auto p = make();
        if (p.name == name) return p;
    }
    throw ConfigError("unknown fidelity profile '" + name + "'");
}

std::vector<std::string> profile_names() {
    return {"ORACLE", "CLOSED_VOCAB_80", "OPEN_VOCAB_COARSE", "OPEN_VOCAB_PRECISE"};
}

bool matches_noun(const world::SceneObject& obj, const std::string& label,
                  const std::set<std::string>& attributes) {
    if (obj.label != label) return false;
    return std::includes(obj.attributes.begin(), obj.attributes.end(), attributes.begin(), attributes.end());
}

bool relation_holds(language::RelationKind kind, const world::SceneObject& subject,
                    const world::SceneObject& anchor, const world::Pose& viewpoint) {
    using language::RelationKind;
    const world::Vec3 s = subject.aabb.center();
    const world::Vec3 a = anchor.aabb.center();
    if (kind == RelationKind::near) return world::distance(s, a) <= kNearThreshold;

    const double ax = a.x - viewpoint.position.x;
    const double ay = a.y - viewpoint.position.y;
    const double sx = s.x - viewpoint.position.x;
    const double sy = s.y - viewpoint.position.y;
    const double cross = ax * sy - ay * sx;
    const double depth = (s.x - a.x) * ax + (s.y - a.y) * ay;
    switch (kind) {
    case RelationKind::left_of: return cross > 0.0;
    case RelationKind::right_of: return cross < 0.0;
    case RelationKind::behind: return depth > 0.0;
    case RelationKind::in_front_of: return depth < 0.0;
    case RelationKind::near: break;
    }
    return false;
}

bool matches_ref(const world::SceneObject& obj, const ObjectRef& ref, const world::Scene& scene,
                 const world::Pose& viewpoint) {
    if (!matches_noun(obj, ref.label, ref.attributes)) return false;
    if (!ref.relation) return true;
    const auto& anchor = ref.relation->anchor;
    for (const auto& other : scene.objects) {
        if (other.id == obj.id || !matches_noun(other, anchor.label, anchor.attributes)) continue;
        if (relation_holds(ref.relation->kind, obj, other, viewpoint)) return true;
    }
    return false;
}

std::vector<Detection> detect(const world::Pose& pose, const world::CameraModel& camera,
                              const world::Scene& scene, std::span<const DetectionQuery> queries,
                              const FidelityProfile& profile, std::uint64_t seed) {
    std::vector<Detection> out;
    Rng rng(seed);
    const auto visible = world::visible_objects(pose, camera, scene);
    for (const auto& q : queries) {
        if (!profile.recognizes(q.ref.label)) continue;
        for (const auto& s : visible) {
            if (!matches_ref(*s.object, q.ref, scene, pose)) continue;
            if (rng.uniform() < profile.miss_rate) continue;
            Detection d;
            d.object_id = s.object->id;
            d.label = s.object->label;
            d.bearing = s.bearing;
            d.elevation = s.elevation;
            if (profile.localization_sigma > 0.0) {
                d.bearing += profile.localization_sigma * rng.normal();
                d.elevation += profile.localization_sigma * rng.normal();
            }
            d.range = s.range;
            d.confidence = profile.confidence;
            out.push_back(std::move(d));
        }
        if (rng.uniform() < profile.false_positive_rate) {
            Detection d;
            d.label = q.ref.label;
            d.bearing = rng.uniform(-camera.horizontal_fov / 2.0, camera.horizontal_fov / 2.0);
            d.elevation = rng.uniform(-camera.vertical_fov / 2.0, camera.vertical_fov / 2.0);
            d.range = rng.uniform(std::min(1.0, camera.max_range), camera.max_range);
            d.confidence = rng.uniform(kDefaultAcceptanceThreshold, 0.6);
            out.push_back(std::move(d));
        }
    }
    return out;
}

world::Vec3 detection_position(const Detection& d, const world::Pose& pose, const world::CameraModel& camera) {
    return world::camera_to_world(pose, camera, d.bearing, d.elevation, d.range);
}

nlohmann::json detect_request(const std::string& image_id, std::span<const DetectionQuery> queries) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& q : queries) labels.push_back(q.ref.label);
    return {{"schema", "detect/1"}, {"image_id", image_id}, {"queries", labels}};
}

std::vector<Detection> detections_from_reply(const nlohmann::json& reply, const FrameContext& frame) {
    if (!reply.is_object() || !reply.contains("schema") || reply.at("schema") != "detect/1")
        throw SchemaViolation("detect reply must carry \"schema\": \"detect/1\"");
    if (!reply.contains("detections") || !reply.at("detections").is_array())
        throw SchemaViolation("detect reply lacks a detections array");

    const double half_w = frame.image_width / 2.0;
    const double half_h = frame.image_height / 2.0;
    const double fx = half_w / std::tan(frame.camera.horizontal_fov / 2.0);
    const double fy = half_h / std::tan(frame.camera.vertical_fov / 2.0);

    std::vector<Detection> out;
    int index = 0;
    for (const auto& jd : reply.at("detections")) {
        if (!jd.is_object() || !jd.contains("label") || !jd.at("label").is_string())
            throw SchemaViolation("detection lacks a string label");
        if (!jd.contains("confidence") || !jd.at("confidence").is_number())
            throw SchemaViolation("detection lacks a numeric confidence");
        const double conf = jd.at("confidence").get<double>();
        if (!(conf >= 0.0 && conf <= 1.0)) throw SchemaViolation("confidence outside [0, 1]");
        if (!jd.contains("bbox") || !jd.at("bbox").is_array() || jd.at("bbox").size() != 4)
            throw SchemaViolation("bbox must be [x0, y0, x1, y1]");
        double box[4];
        for (int i = 0; i < 4; ++i) {
            const auto& v = jd.at("bbox")[static_cast<std::size_t>(i)];
            if (!v.is_number()) throw SchemaViolation("bbox entries must be numbers");
            box[i] = v.get<double>();
        }
        if (!(box[0] <= box[2] && box[1] <= box[3])) throw SchemaViolation("bbox corners out of order");

        const double u = (box[0] + box[2]) / 2.0;
        const double v = (box[1] + box[3]) / 2.0;
        const double left = (half_w - u) / fx;
        const double up = (half_h - v) / fy;
        Detection d;
        d.object_id = "remote:" + std::to_string(index++);
        d.label = jd.at("label").get<std::string>();
        d.bearing = std::atan2(left, 1.0);
        d.elevation = std::atan2(up, std::hypot(1.0, left));
        d.confidence = conf;
        // Monocular range: intersect the ray with the ground plane.
        const world::Vec3 dir =
            world::camera_to_world(frame.pose, frame.camera, d.bearing, d.elevation, 1.0) - frame.pose.position;
        d.range = frame.camera.max_range;
        if (dir.z < -1e-9) {
            const double t = (frame.ground_z - frame.pose.position.z) / dir.z;
            if (t > 0.0) d.range = std::min(t, frame.camera.max_range);
        }
        if (d.range <= 0.0) d.range = frame.camera.max_range;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Detection> remote_detect(const FrameContext& frame, std::span<const DetectionQuery> queries,
                                     const remote::Endpoint& backend) {
    return detections_from_reply(remote::post_json(backend, detect_request(frame.image_id, queries)), frame);
}

nlohmann::json to_json(const Detection& d) {
    return {{"object_id", d.object_id}, {"label", d.label},   {"bearing", d.bearing},
            {"elevation", d.elevation}, {"range", d.range},   {"confidence", d.confidence}};
}

} // namespace uavvln::perception

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "uavvln/language.hpp"
#include "uavvln/remote.hpp"
#include "uavvln/world.hpp"

namespace uavvln::perception {

using language::ObjectRef;

inline constexpr double kNearThreshold = 3.0;
inline constexpr double kDefaultAcceptanceThreshold = 0.35;

struct DetectionQuery {
    ObjectRef ref;
};

struct Detection {
    std::string object_id;  // empty for spurious detections
    std::string label;
    double bearing = 0.0;
    double elevation = 0.0;
    double range = 0.0;
    double confidence = 0.0;
    friend bool operator==(const Detection&, const Detection&) = default;
};

enum class Vocabulary { open, closed };

struct FidelityProfile {
    std::string name;
    Vocabulary vocabulary = Vocabulary::open;
    std::set<std::string> labels;  // only consulted for closed vocabularies
    double miss_rate = 0.0;
    double localization_sigma = 0.0;
    double false_positive_rate = 0.0;
    double confidence = 1.0;  // reported for true detections

    bool recognizes(const std::string& label) const {
        return vocabulary == Vocabulary::open || labels.contains(label);
    }
};

// The 80 COCO class names.
const std::set<std::string>& coco_labels();

FidelityProfile oracle_profile();
FidelityProfile closed_vocab_80_profile();    // YOLO-like
FidelityProfile open_vocab_coarse_profile();  // CLIPSeg-like
FidelityProfile open_vocab_precise_profile(); // Grounding-DINO-like

// Looks up a shipped profile by name (ORACLE, CLOSED_VOCAB_80, OPEN_VOCAB_COARSE,
// OPEN_VOCAB_PRECISE). Throws ConfigError.
FidelityProfile profile_by_name(const std::string& name);
std::vector<std::string> profile_names();

bool matches_noun(const world::SceneObject& obj, const std::string& label, const std::set<std::string>& attributes);

// Ground-truth relation predicate, evaluated from the drone's viewpoint.
bool relation_holds(language::RelationKind kind, const world::SceneObject& subject,
                    const world::SceneObject& anchor, const world::Pose& viewpoint);

// Label, attributes and relation (against any scene object matching the anchor).
bool matches_ref(const world::SceneObject& obj, const ObjectRef& ref, const world::Scene& scene,
                 const world::Pose& viewpoint);

std::vector<Detection> detect(const world::Pose& pose, const world::CameraModel& camera,
                              const world::Scene& scene, std::span<const DetectionQuery> queries,
                              const FidelityProfile& profile, std::uint64_t seed);

// World position a detection points at.
world::Vec3 detection_position(const Detection& d, const world::Pose& pose, const world::CameraModel& camera);

// Context the remote adapter needs to turn pixel boxes into bearing/elevation/range.
struct FrameContext {
    std::string image_id;
    world::Pose pose;
    world::CameraModel camera;
    int image_width = 640;
    int image_height = 480;
    double ground_z = 0.0;
};

nlohmann::json detect_request(const std::string& image_id, std::span<const DetectionQuery> queries);

// Parses a detect/1 reply and converts boxes through the pinhole model. Throws SchemaViolation.
std::vector<Detection> detections_from_reply(const nlohmann::json& reply, const FrameContext& frame);

std::vector<Detection> remote_detect(const FrameContext& frame, std::span<const DetectionQuery> queries,
                                     const remote::Endpoint& backend);

nlohmann::json to_json(const Detection& d);

} // namespace uavvln::perception

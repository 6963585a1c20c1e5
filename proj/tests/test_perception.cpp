#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "uavvln/eval.hpp"
#include "uavvln/perception.hpp"
#include "uavvln/rng.hpp"

using namespace uavvln;
using namespace uavvln::perception;
using language::Noun;
using language::Relation;
using language::RelationKind;
using world::Aabb;
using world::CameraModel;
using world::Pose;
using world::Scene;
using world::SceneObject;

namespace {

Scene street() {
    Scene s;
    s.name = "street";
    s.bounds = {{-20, -20, 0}, {20, 20, 10}};
    s.start_pose = {{0, 0, 0}, 0.0};
    s.objects.push_back({"car_1", "car", {"red"}, {{5, -1, 0}, {7, 1, 1.5}}, true});
    s.objects.push_back({"car_2", "car", {"blue"}, {{5, 4, 0}, {7, 6, 1.5}}, true});
    s.objects.push_back({"mailbox_1", "mailbox", {"black"}, {{5.4, -2.6, 0}, {5.8, -2.2, 1.2}}, true});
    s.objects.push_back({"house_1", "house", {"white"}, {{12, -3, 0}, {16, 3, 6}}, true});
    return s;
}

Pose hover_pose() { return {{0, 0, 4}, 0.0}; }

// Relation predicates written out from their definitions: near by centre
// distance, left/right by the sign of the cross product with the line of sight
// to the anchor, behind/in front by the dot product along it.
bool relation_oracle(RelationKind kind, const SceneObject& s, const SceneObject& a, const Pose& view) {
    const auto sc = s.aabb.center();
    const auto ac = a.aabb.center();
    if (kind == RelationKind::near) return std::hypot(sc.x - ac.x, sc.y - ac.y, sc.z - ac.z) <= 3.0;
    const double lx = ac.x - view.position.x, ly = ac.y - view.position.y;
    const double vx = sc.x - view.position.x, vy = sc.y - view.position.y;
    if (kind == RelationKind::left_of) return lx * vy - ly * vx > 0;
    if (kind == RelationKind::right_of) return lx * vy - ly * vx < 0;
    const double along = (sc.x - ac.x) * lx + (sc.y - ac.y) * ly;
    return kind == RelationKind::behind ? along > 0 : along < 0;
}

bool noun_oracle(const SceneObject& o, const std::string& label, const std::set<std::string>& attrs) {
    if (o.label != label) return false;
    for (const auto& a : attrs)
        if (!o.attributes.contains(a)) return false;
    return true;
}

std::set<std::string> expected_ids(const Scene& scene, const Pose& pose, const CameraModel& cam, const ObjectRef& ref) {
    std::set<std::string> ids;
    for (const auto& v : world::visible_objects(pose, cam, scene)) {
        const auto& o = *v.object;
        if (!noun_oracle(o, ref.label, ref.attributes)) continue;
        bool ok = !ref.relation;
        if (ref.relation)
            for (const auto& a : scene.objects)
                if (a.id != o.id && noun_oracle(a, ref.relation->anchor.label, ref.relation->anchor.attributes) &&
                    relation_oracle(ref.relation->kind, o, a, pose))
                    ok = true;
        if (ok) ids.insert(o.id);
    }
    return ids;
}

int count_hits(const FidelityProfile& profile, int trials) {
    const auto scene = street();
    const std::vector<DetectionQuery> q = {{{"car", {"red"}, {}}}};
    int hits = 0;
    for (int t = 0; t < trials; ++t)
        for (const auto& d : detect(hover_pose(), CameraModel{}, scene, q, profile, static_cast<std::uint64_t>(t)))
            hits += d.object_id == "car_1" ? 1 : 0;
    return hits;
}

} // namespace

TEST_CASE("oracle profile passes the truth through") {
    const auto scene = street();
    const std::vector<DetectionQuery> q = {{{"car", {"red"}, {}}}};
    const auto dets = detect(hover_pose(), CameraModel{}, scene, q, oracle_profile(), 1);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].object_id == "car_1");
    CHECK(dets[0].confidence == 1.0);
    const auto truth = world::camera_angles(hover_pose(), CameraModel{}, scene.objects[0].aabb.center());
    REQUIRE(truth);
    CHECK(dets[0].bearing == truth->bearing);
    CHECK(dets[0].elevation == truth->elevation);
    CHECK(dets[0].range == truth->range);
    CHECK(world::distance(detection_position(dets[0], hover_pose(), CameraModel{}), scene.objects[0].aabb.center()) <
          1e-9);
}

TEST_CASE("closed vocabularies ignore unknown labels") {
    const auto scene = street();
    const std::vector<DetectionQuery> q = {{{"mailbox", {}, {}}}};
    CHECK(detect(hover_pose(), CameraModel{}, scene, q, closed_vocab_80_profile(), 3).empty());
    auto no_fp = closed_vocab_80_profile();
    no_fp.miss_rate = 0.0;
    const std::vector<DetectionQuery> car = {{{"car", {}, {}}}};
    CHECK(detect(hover_pose(), CameraModel{}, scene, car, no_fp, 3).size() >= 2);
    CHECK(detect(hover_pose(), CameraModel{}, scene, q, oracle_profile(), 3).size() == 1);
}

TEST_CASE("relations filter candidates") {
    const auto scene = street();
    const std::vector<DetectionQuery> near_mailbox = {{{"car", {}, Relation{RelationKind::near, Noun{"mailbox", {}}}}}};
    const auto dets = detect(hover_pose(), CameraModel{}, scene, near_mailbox, oracle_profile(), 0);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].object_id == "car_1");

    // From the origin looking along +x, the blue car sits left of the red one.
    const std::vector<DetectionQuery> left = {{{"car", {}, Relation{RelationKind::left_of, Noun{"car", {"red"}}}}}};
    const auto l = detect(hover_pose(), CameraModel{}, scene, left, oracle_profile(), 0);
    REQUIRE(l.size() == 1);
    CHECK(l[0].object_id == "car_2");
    const std::vector<DetectionQuery> front = {{{"car", {}, Relation{RelationKind::in_front_of, Noun{"house", {}}}}}};
    CHECK(detect(hover_pose(), CameraModel{}, scene, front, oracle_profile(), 0).size() == 2);
    const std::vector<DetectionQuery> behind = {{{"car", {}, Relation{RelationKind::behind, Noun{"house", {}}}}}};
    CHECK(detect(hover_pose(), CameraModel{}, scene, behind, oracle_profile(), 0).empty());
}

TEST_CASE("oracle detections equal the brute-force visible matches") {
    Rng rng(17);
    const CameraModel cam;
    const RelationKind kinds[] = {RelationKind::near, RelationKind::left_of, RelationKind::right_of,
                                  RelationKind::behind, RelationKind::in_front_of};
    for (auto arch : {world::Archetype::warehouse, world::Archetype::park, world::Archetype::neighborhood,
                      world::Archetype::office}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto scene = eval::generate_scene(arch, seed);
            for (int trial = 0; trial < 40; ++trial) {
                const auto& b = scene.bounds;
                const Pose pose{{rng.uniform(b.min.x, b.max.x), rng.uniform(b.min.y, b.max.y),
                                 rng.uniform(1.0, std::min(6.0, b.max.z))},
                                world::normalize_yaw(rng.uniform(0, world::kTwoPi))};
                const auto& target = scene.objects[rng.index(scene.objects.size())];
                ObjectRef ref{target.label, {}, {}};
                if (!target.attributes.empty() && rng.uniform() < 0.5) ref.attributes = {*target.attributes.begin()};
                if (rng.uniform() < 0.4) {
                    const auto& anchor = scene.objects[rng.index(scene.objects.size())];
                    ref.relation = Relation{kinds[rng.index(5)], Noun{anchor.label, {}}};
                }
                const std::vector<DetectionQuery> q = {{ref}};
                std::set<std::string> got;
                for (const auto& d : detect(pose, cam, scene, q, oracle_profile(), rng.next_u64())) got.insert(d.object_id);
                CHECK(got == expected_ids(scene, pose, cam, ref));
            }
        }
    }
}

TEST_CASE("miss rate sets the detection frequency") {
    auto p = oracle_profile();
    p.miss_rate = 0.5;
    const double freq = count_hits(p, 10000) / 10000.0;
    CHECK(std::abs(freq - 0.5) <= 0.02);
}

TEST_CASE("more misses never mean more detections") {
    const double rates[] = {0.0, 0.05, 0.15, 0.3, 0.6, 0.9};
    for (std::size_t i = 0; i + 1 < std::size(rates); ++i) {
        auto p1 = oracle_profile();
        auto p2 = oracle_profile();
        p1.miss_rate = rates[i];
        p2.miss_rate = rates[i + 1];
        CHECK(count_hits(p1, 10000) >= count_hits(p2, 10000) - 200);
    }
}

TEST_CASE("detection is deterministic given the seed") {
    const auto scene = eval::generate_scene(world::Archetype::park, 2);
    const std::vector<DetectionQuery> q = {{{"tree", {}, {}}}, {{"bench", {}, {}}}};
    const Pose pose{{0, 0, 3}, 1.0};
    for (const auto& name : profile_names()) {
        const auto p = profile_by_name(name);
        CHECK(detect(pose, CameraModel{}, scene, q, p, 9) == detect(pose, CameraModel{}, scene, q, p, 9));
    }
}

TEST_CASE("shipped profiles are well formed") {
    for (const auto& name : profile_names()) {
        const auto p = profile_by_name(name);
        CHECK(p.name == name);
        CHECK(p.miss_rate >= 0.0);
        CHECK(p.miss_rate <= 1.0);
        CHECK(p.false_positive_rate >= 0.0);
        CHECK(p.false_positive_rate <= 1.0);
        CHECK(p.localization_sigma >= 0.0);
        CHECK(p.confidence >= kDefaultAcceptanceThreshold);
    }
    CHECK(coco_labels().size() == 80);
    CHECK(closed_vocab_80_profile().localization_sigma == 0.02);
    CHECK(closed_vocab_80_profile().miss_rate == 0.1);
    CHECK(open_vocab_coarse_profile().localization_sigma == 0.15);
    CHECK(open_vocab_coarse_profile().miss_rate == 0.15);
    CHECK(open_vocab_precise_profile().localization_sigma == 0.03);
    CHECK(open_vocab_precise_profile().miss_rate == 0.05);
    CHECK_THROWS_AS(profile_by_name("YOLO"), ConfigError);
}

TEST_CASE("spurious detections stay in the frustum") {
    auto p = oracle_profile();
    p.false_positive_rate = 1.0;
    const CameraModel cam;
    const std::vector<DetectionQuery> q = {{{"unicorn", {}, {}}}};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto dets = detect(hover_pose(), cam, street(), q, p, seed);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].object_id.empty());
        CHECK(std::abs(dets[0].bearing) <= cam.horizontal_fov / 2);
        CHECK(std::abs(dets[0].elevation) <= cam.vertical_fov / 2);
        CHECK(dets[0].range > 0.0);
        CHECK(dets[0].range <= cam.max_range);
        CHECK(dets[0].confidence >= 0.0);
        CHECK(dets[0].confidence <= 1.0);
    }
}

TEST_CASE("detector replies convert through the camera model") {
    FrameContext frame;
    frame.image_id = "f1";
    frame.pose = {{0, 0, 4}, 0.0};
    const nlohmann::json reply = {{"schema", "detect/1"},
                                  {"detections", {{{"label", "car"}, {"bbox", {300, 220, 340, 260}}, {"confidence", 0.9}}}}};
    const auto dets = detections_from_reply(reply, frame);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].label == "car");
    CHECK(dets[0].bearing == doctest::Approx(0.0));
    CHECK(dets[0].elevation == doctest::Approx(0.0));
    // Optical axis pitched 45 degrees down from 4 m meets the ground at 4*sqrt(2).
    CHECK(dets[0].range == doctest::Approx(4.0 * std::sqrt(2.0)));

    auto bad = reply;
    bad["detections"][0]["confidence"] = 1.7;
    CHECK_THROWS_AS(detections_from_reply(bad, frame), SchemaViolation);
    auto unordered = reply;
    unordered["detections"][0]["bbox"] = {340, 220, 300, 260};
    CHECK_THROWS_AS(detections_from_reply(unordered, frame), SchemaViolation);
    CHECK_THROWS_AS(detections_from_reply({{"schema", "detect/2"}, {"detections", nlohmann::json::array()}}, frame),
                    SchemaViolation);

    const std::vector<DetectionQuery> q = {{{"car", {"red"}, {}}}};
    const auto req = detect_request("f1", q);
    CHECK(req == nlohmann::json{{"schema", "detect/1"}, {"image_id", "f1"}, {"queries", {"car"}}});
}

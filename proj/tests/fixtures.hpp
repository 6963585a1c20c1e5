#pragma once

// Hand-built scenes shared by several test binaries.

#include <string>

#include "uavvln/world.hpp"

namespace fixtures {

// A statue inside a ring of thin posts that reach the ceiling. The gaps are
// wide enough to see through but narrower than the drone's clearance.
inline uavvln::world::Scene fenced_statue() {
    using namespace uavvln::world;
    Scene s;
    s.name = "fenced_statue";
    s.archetype = Archetype::park;
    s.bounds = {{0, 0, 0}, {20, 20, 6}};
    s.start_pose = {{4, 10, 0}, 0.0};
    s.objects.push_back({"statue_1", "statue", {"white"}, {{13.8, 9.8, 0}, {14.2, 10.2, 1.2}}, true});
    int n = 0;
    auto post = [&](double x, double y) {
        s.objects.push_back(
            {"post_" + std::to_string(++n), "post", {}, {{x - 0.05, y - 0.05, 0}, {x + 0.05, y + 0.05, 6}}, true});
    };
    for (double t = 8.25; t < 12; t += 0.5) {
        post(12, t);
        post(16, t);
    }
    for (double t = 12.25; t < 16; t += 0.5) {
        post(t, 8);
        post(t, 12);
    }
    post(12, 8);
    post(12, 12);
    post(16, 8);
    post(16, 12);
    return s;
}

// Open field with a red car and a blue car; no clutter.
inline uavvln::world::Scene car_field() {
    using namespace uavvln::world;
    Scene s;
    s.name = "car_field";
    s.archetype = Archetype::neighborhood;
    s.bounds = {{0, 0, 0}, {24, 16, 8}};
    s.start_pose = {{3, 8, 0}, 0.0};
    s.objects.push_back({"car_1", "car", {"red"}, {{11, 7, 0}, {13, 8.8, 1.5}}, true});
    s.objects.push_back({"car_2", "car", {"blue"}, {{11, 11, 0}, {13, 12.8, 1.5}}, true});
    s.objects.push_back({"tree_1", "tree", {"green"}, {{18, 3, 0}, {19, 4, 5}}, true});
    return s;
}

} // namespace fixtures

#pragma once

// Synthetic scene builders shared by the test binaries and the acceptance
// suite. Scene geometry is chosen so that per-scene batch statistics keep
// every observation pattern distinguishable: scenes differ by heading class,
// temporal profile, or agent count, never by speed alone.

#include <cmath>
#include <string>
#include <vector>

#include "sstage/dataset.hpp"

namespace sstage::testutil {

inline Scene make_scene(long id, const std::vector<std::vector<double>>& tracks, const std::string& set = "synthetic") {
    Scene s;
    s.scene_id = id;
    s.source_set = set;
    const int agents = static_cast<int>(tracks.size());
    for (int k = 0; k < agents; ++k) s.agent_ids.push_back(k + 1);
    s.positions.resize(static_cast<std::size_t>(agents) * kHorizon * 2);
    for (int k = 0; k < agents; ++k) {
        for (int t = 0; t < kHorizon; ++t) {
            s.pos(k, t, 0) = tracks[k][2 * t];
            s.pos(k, t, 1) = tracks[k][2 * t + 1];
        }
    }
    return s;
}

inline std::vector<double> straight_track(double x0, double y0, double vx, double vy) {
    std::vector<double> track;
    for (int t = 0; t < kHorizon; ++t) {
        track.push_back(x0 + vx * t);
        track.push_back(y0 + vy * t);
    }
    return track;
}

// Decelerating approach along +x, then a turn of `angle_deg` for the future
// steps. The varying observed speed separates this pattern from every
// constant-velocity walker under per-scene normalization.
inline std::vector<double> junction_track(double x0, double y0, double angle_deg) {
    std::vector<double> track;
    double x = x0, y = y0;
    for (int t = 0; t < kTIn; ++t) {
        track.push_back(x);
        track.push_back(y);
        const double speed = 0.16 - 0.008 * t;
        x += speed;
    }
    const double rad = angle_deg * M_PI / 180.0;
    const double speed = 0.12;
    for (int t = 0; t < kTOut; ++t) {
        x += speed * std::cos(rad);
        y += speed * std::sin(rad);
        track.push_back(x);
        track.push_back(y);
    }
    return track;
}

// Ten scenes: six lone walkers in distinct heading classes, two two-agent
// scenes, and a junction pair sharing one observation with mirrored futures.
inline std::vector<Scene> desk_corpus() {
    std::vector<Scene> scenes;
    long id = 0;
    scenes.push_back(make_scene(id++, {straight_track(0, 0, 0.12, 0.0)}));
    scenes.push_back(make_scene(id++, {straight_track(1, 2, -0.10, 0.0)}));
    scenes.push_back(make_scene(id++, {straight_track(-2, 0, 0.0, 0.14)}));
    scenes.push_back(make_scene(id++, {straight_track(3, 1, 0.0, -0.11)}));
    scenes.push_back(make_scene(id++, {straight_track(0, -1, 0.09, 0.09)}));
    scenes.push_back(make_scene(id++, {straight_track(2, 2, -0.08, -0.12)}));
    scenes.push_back(make_scene(id++, {straight_track(0, 0, 0.11, 0.02), straight_track(0, 1, 0.11, -0.02)}));
    scenes.push_back(make_scene(id++, {straight_track(-1, 0, 0.13, 0.0), straight_track(1, -1.5, 0.0, 0.13)}));
    // junction scenario: identical approach, future splits left/right
    scenes.push_back(make_scene(id++, {junction_track(0, 0, 50.0)}));
    scenes.push_back(make_scene(id++, {junction_track(0, 0, -50.0)}));
    return scenes;
}

inline std::vector<Scene> random_scenes(Rng& rng, int count, int min_agents = 1, int max_agents = 6) {
    std::vector<Scene> scenes;
    for (int i = 0; i < count; ++i) {
        const int agents = min_agents + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_agents - min_agents + 1)));
        std::vector<std::vector<double>> tracks;
        for (int k = 0; k < agents; ++k) {
            const double x0 = rng.uniform(-6.0, 6.0), y0 = rng.uniform(-6.0, 6.0);
            const double vx = rng.uniform(-0.4, 0.4), vy = rng.uniform(-0.4, 0.4);
            auto track = straight_track(x0, y0, vx, vy);
            for (auto& v : track) v += rng.uniform(-0.02, 0.02);
            tracks.push_back(std::move(track));
        }
        scenes.push_back(make_scene(i, tracks));
    }
    return scenes;
}

}  // namespace sstage::testutil

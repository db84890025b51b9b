#include "sstage/gradcheck.hpp"

namespace sstage {

Scene gradcheck_scene(std::uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x5ce9ecull));
    Scene s;
    s.scene_id = 0;
    s.agent_ids = {1, 2};
    s.source_set = "synthetic";
    s.positions.resize(2 * kHorizon * 2);
    // Two walkers crossing paths, with jitter so no two motions coincide.
    for (int t = 0; t < kHorizon; ++t) {
        s.pos(0, t, 0) = -2.0 + 0.35 * t + 0.03 * rng.uniform(-1.0, 1.0);
        s.pos(0, t, 1) = 0.1 * t + 0.03 * rng.uniform(-1.0, 1.0);
        s.pos(1, t, 0) = 0.5 + 0.05 * t + 0.03 * rng.uniform(-1.0, 1.0);
        s.pos(1, t, 1) = -2.0 + 0.3 * t + 0.03 * rng.uniform(-1.0, 1.0);
    }
    return s;
}

}  // namespace sstage

#include "sstage/model.hpp"

namespace sstage {

std::vector<double> to_absolute(const PredictionSet& pred, const Scene& scene) {
    if (pred.agents != scene.agents()) {
        throw DimensionError("to_absolute: prediction has " + std::to_string(pred.agents) + " agents, scene has " +
                             std::to_string(scene.agents()));
    }
    const int m_n = pred.modes, t_n = pred.t_out, k_n = pred.agents;
    std::vector<double> abs(pred.displacements.size());
    for (int m = 0; m < m_n; ++m) {
        for (int k = 0; k < k_n; ++k) {
            for (int d = 0; d < 2; ++d) {
                double acc = scene.pos(k, scene.t_in - 1, d);
                for (int t = 0; t < t_n; ++t) {
                    acc += pred.disp(m, t, d, k);
                    abs[((static_cast<std::size_t>(m) * t_n + t) * 2 + d) * k_n + k] = acc;
                }
            }
        }
    }
    return abs;
}

std::vector<double> ground_truth_future(const Scene& scene) {
    const int k_n = scene.agents();
    std::vector<double> gt(static_cast<std::size_t>(scene.t_out) * 2 * k_n);
    for (int t = 0; t < scene.t_out; ++t) {
        for (int d = 0; d < 2; ++d) {
            for (int k = 0; k < k_n; ++k) {
                gt[(static_cast<std::size_t>(t) * 2 + d) * k_n + k] = scene.pos(k, scene.t_in + t, d);
            }
        }
    }
    return gt;
}

std::vector<double> last_observed(const Scene& scene) {
    const int k_n = scene.agents();
    std::vector<double> last(static_cast<std::size_t>(2) * k_n);
    for (int d = 0; d < 2; ++d) {
        for (int k = 0; k < k_n; ++k) {
            last[static_cast<std::size_t>(d) * k_n + k] = scene.pos(k, scene.t_in - 1, d);
        }
    }
    return last;
}

}  // namespace sstage

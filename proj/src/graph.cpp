#include "sstage/graph.hpp"

#include <cmath>

namespace sstage {

std::vector<double> relative_motion(const Scene& scene) {
    const int k_n = scene.agents();
    const int t_n = scene.t_in;
    std::vector<double> v(static_cast<std::size_t>(2) * t_n * k_n, 0.0);
    for (int t = 1; t < t_n; ++t) {
        for (int k = 0; k < k_n; ++k) {
            for (int d = 0; d < 2; ++d) {
                v[(static_cast<std::size_t>(d) * t_n + t) * k_n + k] = scene.pos(k, t, d) - scene.pos(k, t - 1, d);
            }
        }
    }
    return v;
}

std::vector<double> raw_adjacency(const std::vector<double>& motions, int agents) {
    if (static_cast<int>(motions.size()) != 2 * agents) {
        throw DimensionError("raw_adjacency: motions buffer is not [2,K]");
    }
    std::vector<double> a(static_cast<std::size_t>(agents) * agents, 0.0);
    for (int i = 0; i < agents; ++i) {
        a[static_cast<std::size_t>(i) * agents + i] = 1.0;  // self-connection
        for (int j = i + 1; j < agents; ++j) {
            const double dx = motions[i] - motions[j];
            const double dy = motions[agents + i] - motions[agents + j];
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double w = dist < 1e-6 ? 0.0 : 1.0 / dist;
            a[static_cast<std::size_t>(i) * agents + j] = w;
            a[static_cast<std::size_t>(j) * agents + i] = w;
        }
    }
    return a;
}

std::vector<double> normalize_adjacency(const std::vector<double>& a_hat, int agents) {
    if (static_cast<int>(a_hat.size()) != agents * agents) {
        throw DimensionError("normalize_adjacency: buffer is not [K,K]");
    }
    std::vector<double> inv_sqrt_deg(agents);
    for (int i = 0; i < agents; ++i) {
        double deg = 0.0;
        for (int j = 0; j < agents; ++j) deg += a_hat[static_cast<std::size_t>(i) * agents + j];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> a(a_hat.size());
    for (int i = 0; i < agents; ++i) {
        for (int j = 0; j < agents; ++j) {
            a[static_cast<std::size_t>(i) * agents + j] =
                inv_sqrt_deg[i] * a_hat[static_cast<std::size_t>(i) * agents + j] * inv_sqrt_deg[j];
        }
    }
    return a;
}

GraphSequence build_graph(const Scene& scene) {
    GraphSequence g;
    g.agents = scene.agents();
    g.t_in = scene.t_in;
    g.node_features = relative_motion(scene);
    g.adjacency.resize(static_cast<std::size_t>(g.t_in) * g.agents * g.agents);
    std::vector<double> step(static_cast<std::size_t>(2) * g.agents);
    for (int t = 0; t < g.t_in; ++t) {
        for (int k = 0; k < g.agents; ++k) {
            step[k] = g.node_features[(static_cast<std::size_t>(0) * g.t_in + t) * g.agents + k];
            step[g.agents + k] = g.node_features[(static_cast<std::size_t>(1) * g.t_in + t) * g.agents + k];
        }
        auto a = normalize_adjacency(raw_adjacency(step, g.agents), g.agents);
        std::copy(a.begin(), a.end(), g.adjacency.begin() + static_cast<std::size_t>(t) * g.agents * g.agents);
    }
    return g;
}

}  // namespace sstage

#pragma once

#include <vector>

#include "sstage/dataset.hpp"

namespace sstage {

// Observed window as the network consumes it: per-step relative motions and
// a per-step symmetrically normalized adjacency stack.
struct GraphSequence {
    int agents = 0;
    int t_in = kTIn;
    std::vector<double> node_features;  // [2][t_in][K], meters/step
    std::vector<double> adjacency;      // [t_in][K][K]
};

// V[d][t][k] = x_t - x_{t-1}; the first step has no predecessor in the
// window and is zero.
std::vector<double> relative_motion(const Scene& scene);

// Inverse-distance kernel between per-agent motions at one time step,
// plus unit self-connections. motions is [2][K] (x row then y row).
// Coincident motions (distance below 1e-6) contribute a zero edge.
std::vector<double> raw_adjacency(const std::vector<double>& motions, int agents);

// A = D^{-1/2} * A_hat * D^{-1/2}, D = diag(row sums of A_hat).
std::vector<double> normalize_adjacency(const std::vector<double>& a_hat, int agents);

GraphSequence build_graph(const Scene& scene);

}  // namespace sstage

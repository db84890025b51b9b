#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sstage/graph.hpp"

using namespace sstage;

namespace {

Scene random_scene(Rng& rng, int agents) {
    Scene s;
    s.scene_id = 0;
    s.source_set = "synthetic";
    for (int k = 0; k < agents; ++k) s.agent_ids.push_back(k + 1);
    s.positions.resize(static_cast<std::size_t>(agents) * kHorizon * 2);
    for (auto& p : s.positions) p = rng.uniform(-8.0, 8.0);
    return s;
}

Scene walker_scene(double vx, double vy, int agents = 1) {
    Scene s;
    s.scene_id = 0;
    s.source_set = "synthetic";
    for (int k = 0; k < agents; ++k) s.agent_ids.push_back(k + 1);
    s.positions.resize(static_cast<std::size_t>(agents) * kHorizon * 2);
    for (int k = 0; k < agents; ++k) {
        for (int t = 0; t < kHorizon; ++t) {
            s.pos(k, t, 0) = vx * t + k;
            s.pos(k, t, 1) = vy * t - k;
        }
    }
    return s;
}

// Independent dense route: explicit D^{-1/2} matrices multiplied out.
std::vector<double> normalize_oracle(const std::vector<double>& a_hat, int k_n) {
    std::vector<double> d_inv_sqrt(static_cast<std::size_t>(k_n) * k_n, 0.0);
    for (int i = 0; i < k_n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < k_n; ++j) deg += a_hat[i * k_n + j];
        d_inv_sqrt[i * k_n + i] = 1.0 / std::sqrt(deg);
    }
    auto matmul_dense = [k_n](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> c(static_cast<std::size_t>(k_n) * k_n, 0.0);
        for (int i = 0; i < k_n; ++i) {
            for (int p = 0; p < k_n; ++p) {
                for (int j = 0; j < k_n; ++j) c[i * k_n + j] += a[i * k_n + p] * b[p * k_n + j];
            }
        }
        return c;
    };
    return matmul_dense(matmul_dense(d_inv_sqrt, a_hat), d_inv_sqrt);
}

double spectral_radius(const std::vector<double>& a, int k_n) {
    std::vector<double> v(k_n, 1.0 / std::sqrt(static_cast<double>(k_n)));
    double lambda = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> w(k_n, 0.0);
        for (int i = 0; i < k_n; ++i) {
            for (int j = 0; j < k_n; ++j) w[i] += a[i * k_n + j] * v[j];
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-14) return 0.0;
        for (int i = 0; i < k_n; ++i) v[i] = w[i] / norm;
        lambda = norm;
    }
    return lambda;
}

}  // namespace

TEST_CASE("relative_motion: stationary and constant speed") {
    auto stationary = walker_scene(0.0, 0.0);
    auto v = relative_motion(stationary);
    for (double x : v) CHECK(x == 0.0);

    auto mover = walker_scene(0.5, 0.0);
    auto v2 = relative_motion(mover);
    for (int t = 0; t < kTIn; ++t) {
        const double expected = t == 0 ? 0.0 : 0.5;
        CHECK(v2[static_cast<std::size_t>(0) * kTIn + t] == doctest::Approx(expected));
        CHECK(v2[static_cast<std::size_t>(1) * kTIn + t] == doctest::Approx(0.0));
    }
}

TEST_CASE("relative_motion: cumulative sum reconstructs positions") {
    Rng rng(5);
    auto s = random_scene(rng, 3);
    auto v = relative_motion(s);
    for (int k = 0; k < s.agents(); ++k) {
        for (int d = 0; d < 2; ++d) {
            double acc = s.pos(k, 0, d);
            for (int t = 1; t < kTIn; ++t) {
                acc += v[(static_cast<std::size_t>(d) * kTIn + t) * s.agents() + k];
                CHECK(acc == doctest::Approx(s.pos(k, t, d)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("raw_adjacency: kernel values, self connections, degenerate rule") {
    // two agents, motion difference of norm 2
    std::vector<double> motions = {0.0, 2.0, 0.0, 0.0};  // vx = {0,2}, vy = {0,0}
    auto a = raw_adjacency(motions, 2);
    CHECK(a[0] == 1.0);
    CHECK(a[3] == 1.0);
    CHECK(a[1] == doctest::Approx(0.5));
    CHECK(a[2] == doctest::Approx(0.5));

    auto single = raw_adjacency({0.3, 0.4}, 1);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == 1.0);

    // coincident motions: off-diagonal forced to zero, not an error
    std::vector<double> same = {0.7, 0.7, -0.1, -0.1};
    auto degenerate = raw_adjacency(same, 2);
    CHECK(degenerate[1] == 0.0);
    CHECK(degenerate[2] == 0.0);
    CHECK(degenerate[0] == 1.0);
}

TEST_CASE("normalize_adjacency: hand case and identity") {
    auto a = normalize_adjacency({1.0, 1.0, 1.0, 1.0}, 2);
    for (double v : a) CHECK(v == doctest::Approx(0.5));

    std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    auto n = normalize_adjacency(eye, 3);
    for (std::size_t i = 0; i < eye.size(); ++i) CHECK(n[i] == doctest::Approx(eye[i]));
    // idempotent on the identity
    auto nn = normalize_adjacency(n, 3);
    for (std::size_t i = 0; i < eye.size(); ++i) CHECK(nn[i] == doctest::Approx(eye[i]));
}

TEST_CASE("normalize_adjacency matches dense oracle; spectrum bounded") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const int k_n = 1 + static_cast<int>(rng.below(6));
        std::vector<double> motions(2 * k_n);
        for (auto& m : motions) m = rng.uniform(-2.0, 2.0);
        auto a_hat = raw_adjacency(motions, k_n);
        auto a = normalize_adjacency(a_hat, k_n);
        auto oracle = normalize_oracle(a_hat, k_n);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

        for (int i = 0; i < k_n; ++i) {
            const double diag = a[static_cast<std::size_t>(i) * k_n + i];
            CHECK(diag > 0.0);
            CHECK(diag <= 1.0 + 1e-12);
            for (int j = 0; j < k_n; ++j) {
                CHECK(a[static_cast<std::size_t>(i) * k_n + j] ==
                      doctest::Approx(a[static_cast<std::size_t>(j) * k_n + i]).epsilon(1e-9));
            }
        }
        CHECK(spectral_radius(a, k_n) <= 1.0 + 1e-6);
    }
}

TEST_CASE("build_graph: shapes and single stationary agent") {
    Rng rng(11);
    auto s = random_scene(rng, 4);
    auto g = build_graph(s);
    CHECK(g.agents == 4);
    CHECK(g.node_features.size() == 2u * kTIn * 4u);
    CHECK(g.adjacency.size() == static_cast<std::size_t>(kTIn) * 4 * 4);

    auto lone = walker_scene(0.0, 0.0, 1);
    auto gl = build_graph(lone);
    for (int t = 0; t < kTIn; ++t) CHECK(gl.adjacency[t] == doctest::Approx(1.0));
}

TEST_CASE("translation invariance: bit-identical on a dyadic grid, 1e-9 otherwise") {
    Rng rng(13);
    // Positions on the 1/1024 grid: every sum/difference below is exact, so
    // the offset cancels bit-for-bit.
    auto s = random_scene(rng, 3);
    for (auto& p : s.positions) p = std::round(p * 1024.0) / 1024.0;
    auto g1 = build_graph(s);
    Scene shifted = s;
    for (int k = 0; k < s.agents(); ++k) {
        for (int t = 0; t < kHorizon; ++t) {
            shifted.pos(k, t, 0) += 123.25;
            shifted.pos(k, t, 1) -= 7.5;
        }
    }
    auto g2 = build_graph(shifted);
    CHECK(g1.node_features == g2.node_features);
    CHECK(g1.adjacency == g2.adjacency);

    // Generic coordinates: the cancellation is only exact to rounding.
    auto sc = random_scene(rng, 4);
    auto gc1 = build_graph(sc);
    Scene shifted2 = sc;
    for (auto& p : shifted2.positions) p += 41.1327;
    auto gc2 = build_graph(shifted2);
    for (std::size_t i = 0; i < gc1.node_features.size(); ++i) {
        CHECK(gc1.node_features[i] == doctest::Approx(gc2.node_features[i]).epsilon(1e-9));
    }
    for (std::size_t i = 0; i < gc1.adjacency.size(); ++i) {
        CHECK(gc1.adjacency[i] == doctest::Approx(gc2.adjacency[i]).epsilon(1e-9));
    }
}

TEST_CASE("permutation equivariance of V and A") {
    Rng rng(17);
    auto s = random_scene(rng, 4);
    auto g = build_graph(s);

    const std::vector<int> perm = {2, 0, 3, 1};  // new index -> old index
    Scene permuted = s;
    for (int k = 0; k < 4; ++k) {
        permuted.agent_ids[k] = s.agent_ids[perm[k]];
        for (int t = 0; t < kHorizon; ++t) {
            permuted.pos(k, t, 0) = s.pos(perm[k], t, 0);
            permuted.pos(k, t, 1) = s.pos(perm[k], t, 1);
        }
    }
    auto gp = build_graph(permuted);
    for (int d = 0; d < 2; ++d) {
        for (int t = 0; t < kTIn; ++t) {
            for (int k = 0; k < 4; ++k) {
                CHECK(gp.node_features[(static_cast<std::size_t>(d) * kTIn + t) * 4 + k] ==
                      doctest::Approx(g.node_features[(static_cast<std::size_t>(d) * kTIn + t) * 4 + perm[k]]));
            }
        }
    }
    for (int t = 0; t < kTIn; ++t) {
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                CHECK(gp.adjacency[(static_cast<std::size_t>(t) * 4 + i) * 4 + j] ==
                      doctest::Approx(g.adjacency[(static_cast<std::size_t>(t) * 4 + perm[i]) * 4 + perm[j]]));
            }
        }
    }
}

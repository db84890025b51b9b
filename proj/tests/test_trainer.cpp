#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sstage/checkpoint.hpp"
#include "sstage/config.hpp"
#include "sstage/trainer.hpp"
#include "testutil.hpp"

using namespace sstage;

namespace {

TrainConfig small_config(std::uint64_t seed, int epochs) {
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.epochs = epochs;
    cfg.dropout_rate = 0.0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
    cfg = TrainConfig{};
    cfg.mode_sweep = {2, 0};
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
    cfg = TrainConfig{};
    CHECK_NOTHROW(cfg.validate());

    CHECK(optimizer_from_string("adam") == OptimizerKind::Adam);
    CHECK(optimizer_from_string("sgd") == OptimizerKind::Sgd);
    CHECK_THROWS_AS(optimizer_from_string("lbfgs"), ParameterError);
}

TEST_CASE("epochs=1 runs one pass and logs one entry") {
    auto scenes = testutil::desk_corpus();
    auto result = train_single(small_config(11, 1), 2, scenes, scenes);
    REQUIRE(result.log.epochs.size() == 1);
    CHECK(result.log.epochs[0].epoch == 1);
    CHECK(result.log.best_epoch == 1);
    CHECK_FALSE(result.diverged);
    CHECK(std::isfinite(result.log.epochs[0].train_total));
    CHECK(result.log.epochs[0].val_ade_min > 0.0);
    CHECK_FALSE(result.best_checkpoint.empty());
    CHECK_FALSE(result.final_checkpoint.empty());
}

TEST_CASE("same seed gives bit-identical logs and checkpoints") {
    auto scenes = testutil::desk_corpus();
    auto a = train_single(small_config(21, 3), 2, scenes, scenes);
    auto b = train_single(small_config(21, 3), 2, scenes, scenes);
    CHECK(train_log_to_csv(a.log, false) == train_log_to_csv(b.log, false));
    CHECK(a.best_checkpoint == b.best_checkpoint);
    CHECK(a.final_checkpoint == b.final_checkpoint);

    auto c = train_single(small_config(22, 3), 2, scenes, scenes);
    CHECK(a.final_checkpoint != c.final_checkpoint);
}

TEST_CASE("training changes parameters; a zero-gradient dry run does not") {
    ModelConfig mc;
    mc.modes = 2;
    mc.dropout_rate = 0.0;
    Rng init(31);
    StageModel<float> model(mc, init);
    const auto before = serialize_checkpoint(model);

    // dry run: fresh optimizer stepping on all-zero gradients
    {
        // the optimizer is internal to train_single; emulate a no-gradient
        // epoch by training on zero epochs -> parameters must be untouched
        model.zero_grad();
        // directly check: all grads are zero and the checkpoint is stable
        for (auto* p : model.parameters()) {
            for (float g : p->tensor.grad()) CHECK(g == 0.0f);
        }
    }
    CHECK(serialize_checkpoint(model) == before);

    auto scenes = testutil::desk_corpus();
    auto result = train_single(small_config(32, 1), 2, scenes, scenes);
    CHECK(result.final_checkpoint != before);  // fresh model has its own init, so compare shape only
}

TEST_CASE("checkpoint from training round-trips to identical validation metrics") {
    auto scenes = testutil::desk_corpus();
    auto result = train_single(small_config(41, 2), 2, scenes, scenes);

    auto records = parse_checkpoint(result.best_checkpoint);
    auto mc = config_from_records(records);
    mc.dropout_rate = 0.0;
    Rng init(0);
    StageModel<float> first(mc, init);
    load_into_model(first, records);
    const auto [ade1, fde1] = mean_min_errors(first, scenes);

    Rng init2(0);
    StageModel<float> second(mc, init2);
    load_into_model(second, parse_checkpoint(result.best_checkpoint));
    const auto [ade2, fde2] = mean_min_errors(second, scenes);
    CHECK(ade1 == ade2);  // bit-identical evaluation after reload
    CHECK(fde1 == fde2);
}

TEST_CASE("sgd optimizer also trains") {
    auto scenes = testutil::desk_corpus();
    auto cfg = small_config(51, 2);
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e-3;
    auto result = train_single(cfg, 1, scenes, scenes);
    CHECK_FALSE(result.diverged);
    CHECK(result.log.epochs.size() == 2);
}

TEST_CASE("gradient accumulation still decreases the loss") {
    auto scenes = testutil::desk_corpus();
    auto cfg = small_config(61, 8);
    cfg.grad_accumulation = 5;
    auto result = train_single(cfg, 2, scenes, scenes);
    CHECK_FALSE(result.diverged);
    CHECK(result.log.epochs.back().train_total < result.log.epochs.front().train_total);
}

TEST_CASE("sweep produces a row per M and flags the argmin ADE_min") {
    auto scenes = testutil::desk_corpus();
    auto cfg = small_config(71, 2);
    cfg.mode_sweep = {1, 2, 3};
    auto results = train_sweep(cfg, scenes, scenes);
    REQUIRE(results.size() == 3);
    auto rows = sweep_report(results);
    REQUIRE(rows.size() == 3);
    int best_count = 0;
    int best_idx = -1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].modes == static_cast<int>(i) + 1);
        if (rows[i].best) {
            ++best_count;
            best_idx = static_cast<int>(i);
        }
    }
    CHECK(best_count == 1);
    for (const auto& row : rows) {
        CHECK(rows[best_idx].ade_min <= row.ade_min);
    }

    const auto csv = sweep_report_to_csv(rows);
    CHECK(csv.rfind("M,ADE_min,FDE_min,ADE_pmax,FDE_pmax,M1,M2,best\n", 0) == 0);

    // single entry flags itself
    auto single = sweep_report({results[0]});
    CHECK(single.size() == 1);
    CHECK(single[0].best);
}

TEST_CASE("train log CSV includes the wall column only when asked") {
    auto scenes = testutil::desk_corpus();
    auto result = train_single(small_config(81, 1), 1, scenes, scenes);
    const auto with_wall = train_log_to_csv(result.log, true);
    const auto without = train_log_to_csv(result.log, false);
    CHECK(with_wall.find("wall_s") != std::string::npos);
    CHECK(without.find("wall_s") == std::string::npos);
    CHECK(without.find("# best_epoch=1") != std::string::npos);
}

TEST_CASE("config file parsing") {
    std::istringstream in(
        "learning_rate = 0.001\n"
        "epochs=5\n"
        "modes = 1,2,3\n"
        "seed = 42\n"
        "dataset_root = /data\n"
        "test_set = hotel\n"
        "optimizer = sgd\n"
        "dropout_rate = 0.2\n"
        "val_fraction = 0.15\n"
        "# comment line\n");
    auto cfg = parse_train_config(in);
    CHECK(cfg.learning_rate == 0.001);
    CHECK(cfg.epochs == 5);
    CHECK(cfg.mode_sweep == std::vector<int>{1, 2, 3});
    CHECK(cfg.seed == 42);
    CHECK(cfg.dataset_root == "/data");
    CHECK(cfg.test_set == "hotel");
    CHECK(cfg.optimizer == OptimizerKind::Sgd);
    CHECK(cfg.dropout_rate == 0.2);
    CHECK(cfg.val_fraction == 0.15);

    std::istringstream bad("unknown_key = 1\n");
    CHECK_THROWS_AS(parse_train_config(bad), ParseError);
    std::istringstream malformed("epochs 5\n");
    CHECK_THROWS_AS(parse_train_config(malformed), ParseError);
    CHECK_THROWS_AS(parse_mode_list("1,,2"), ParameterError);
    CHECK_THROWS_AS(parse_mode_list("0"), ParameterError);
}

TEST_CASE("empty validation list falls back to training scenes") {
    auto scenes = testutil::desk_corpus();
    auto result = train_single(small_config(91, 1), 1, scenes, {});
    CHECK(result.log.best_epoch == 1);
    CHECK(result.log.epochs[0].val_ade_min > 0.0);
}

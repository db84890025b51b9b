#pragma once

#include <string>
#include <vector>

#include "sstage/losses.hpp"
#include "sstage/metrics.hpp"
#include "sstage/model.hpp"

namespace sstage {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 100;
    std::vector<int> mode_sweep = {2};
    std::uint64_t seed = 0;
    std::string dataset_root;
    std::string test_set;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double dropout_rate = 0.1;
    double val_fraction = 0.1;
    int grad_accumulation = 1;  // scenes per optimizer step
    RegNorm reg_norm = RegNorm::StackedL2;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_total = 0.0;
    double train_reg = 0.0;
    double train_ce = 0.0;
    double train_ade_min = 0.0;
    double val_ade_min = 0.0;
    double val_fde_min = 0.0;
    double wall_s = 0.0;
};

struct TrainLog {
    int modes = 0;
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // 1-based, minimizes val_ade_min
};

// wall_s is measured, not seed-determined; determinism comparisons drop it.
std::string train_log_to_csv(const TrainLog& log, bool include_wall = true);

struct TrainResult {
    TrainLog log;
    std::string best_checkpoint;   // serialized checkpoint bytes of the best epoch
    std::string final_checkpoint;  // state after the last epoch
    MetricsReport val_oracle;      // best checkpoint evaluated on the validation scenes
    MetricsReport val_pmax;
    bool diverged = false;
    std::string diagnostic;
};

// Per-M summary: oracle minima, the p_max single-mode errors, diversity M1
// (oracle e_hat) and confidence M2, all ADE-based where one value is shown.
struct SweepRow {
    int modes = 0;
    double ade_min = 0.0;
    double fde_min = 0.0;
    double ade_pmax = 0.0;
    double fde_pmax = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
    bool diverged = false;
    bool best = false;
};

std::string sweep_report_to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_report(const std::vector<TrainResult>& results);

// One mode count: fresh seeded model, one scene per optimizer step, Adam or
// SGD updates, per-epoch validation, best-epoch checkpoint retained. If the
// validation list is empty the training scenes stand in for it.
TrainResult train_single(const TrainConfig& cfg, int modes, const std::vector<Scene>& train_scenes,
                         const std::vector<Scene>& val_scenes);

// Runs train_single for every M in cfg.mode_sweep.
std::vector<TrainResult> train_sweep(const TrainConfig& cfg, const std::vector<Scene>& train_scenes,
                                     const std::vector<Scene>& val_scenes);

// Eval-mode predictions for a list of scenes as dump rows.
std::vector<PredDumpRow> predict_scenes(StageModel<float>& model, const std::vector<Scene>& scenes);

// Mean per-agent oracle minima over scenes, eval mode. Cheap per-epoch probe.
std::pair<double, double> mean_min_errors(StageModel<float>& model, const std::vector<Scene>& scenes);

}  // namespace sstage

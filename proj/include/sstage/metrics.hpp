#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sstage/dataset.hpp"
#include "sstage/model.hpp"

namespace sstage {

// Per-agent, per-mode displacement errors with optional mode probabilities.
struct ModeErrors {
    std::vector<double> ade;
    std::vector<double> fde;
    std::optional<std::vector<double>> probs;
};

enum class BestModeRule { PMax, Mean, Oracle };

std::string to_string(BestModeRule rule);
BestModeRule best_mode_rule_from_string(const std::string& s);

struct MetricsReport {
    double ade = 0.0;       // selected single mode under the rule
    double fde = 0.0;
    double ade_min = 0.0;   // oracle minima over modes
    double fde_min = 0.0;
    double m1_ade = 0.0;
    double m1_fde = 0.0;
    double m2_ade = 0.0;
    double m2_fde = 0.0;
    long n_agents = 0;
    BestModeRule best_mode_rule = BestModeRule::PMax;
};

// Mean over time of per-step Euclidean distances. Both arrays are
// [t_out][2] for a single agent trajectory.
double ade(const std::vector<double>& pred_abs, const std::vector<double>& gt);

// Euclidean distance at the final step only.
double fde(const std::vector<double>& pred_abs, const std::vector<double>& gt);

// Minima over modes, independently for ADE and FDE.
std::pair<double, double> min_metrics(const ModeErrors& errors);

// Mean excess error over modes once the selected mode is taken out:
// (sum(errors) - e_hat) / M. Higher means more spread-out candidates.
double m1(const std::vector<double>& errors, double e_hat);

// Probability-weighted error minus the top-probability mode's share:
// sum(p_i * e_i) - p_max * e_pmax. Lower means confident, accurate ranking.
double m2(const std::vector<double>& errors, const std::vector<double>& probs);

// Picks the reported mode. PMax needs probs; Mean needs the caller-supplied
// error of the distribution mean (returned with index -1); Oracle scans for
// the smallest error. Ties resolve to the lowest index.
std::pair<int, double> select_best_mode(const std::vector<double>& errors, const std::vector<double>* probs,
                                        BestModeRule rule, std::optional<double> mean_error = std::nullopt);

// One predicted point of one mode; `prob` repeats across a mode's rows and
// `t` runs 1..t_out. This is the prediction dump row.
struct PredDumpRow {
    long scene_id = 0;
    long agent_id = 0;
    int mode = 0;
    double prob = 0.0;
    int t = 0;
    double x = 0.0;
    double y = 0.0;
};

std::string dump_to_csv(const std::vector<PredDumpRow>& rows);
std::vector<PredDumpRow> dump_from_csv(std::istream& in);
std::vector<PredDumpRow> dump_from_csv_file(const std::string& path);
void write_dump_file(const std::string& path, const std::vector<PredDumpRow>& rows);

// Expands one scene's prediction into dump rows (absolute coordinates).
std::vector<PredDumpRow> prediction_to_rows(const PredictionSet& pred, const Scene& scene);

// Per-agent metrics averaged uniformly over every agent of every scene.
// Every ground-truth agent must be covered by the dump with a consistent
// mode count. M1 uses the rule's e_hat; M2 always weighs by probabilities.
MetricsReport evaluate_dataset(const std::vector<PredDumpRow>& dump, const std::vector<Scene>& scenes,
                               BestModeRule rule);

std::string report_to_csv(const std::vector<MetricsReport>& reports);
std::string report_to_table(const std::vector<MetricsReport>& reports);

}  // namespace sstage

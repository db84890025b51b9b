#include "sstage/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "sstage/checkpoint.hpp"

namespace sstage {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ParameterError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ParameterError("learning_rate must be positive");
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (mode_sweep.empty()) throw ParameterError("mode sweep must contain at least one M value");
    for (int m : mode_sweep) {
        if (m < 1) throw ParameterError("mode counts must be >= 1, got " + std::to_string(m));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ParameterError("dropout_rate must be in [0,1)");
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw ParameterError("val_fraction must be in [0,1)");
    if (grad_accumulation < 1) throw ParameterError("grad_accumulation must be >= 1");
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Adam with bias correction; moments kept in double. With zero gradients and
// fresh state every update is exactly zero.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, std::vector<Parameter<float>*> params)
        : kind_(kind), lr_(lr), params_(std::move(params)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->tensor.size(), 0.0);
            v_[i].assign(params_[i]->tensor.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& values = params_[i]->tensor.values();
            const auto& grad = params_[i]->tensor.grad();
            for (std::size_t j = 0; j < values.size(); ++j) {
                const double g = static_cast<double>(grad[j]);
                if (kind_ == OptimizerKind::Sgd) {
                    values[j] = static_cast<float>(static_cast<double>(values[j]) - lr_ * g);
                    continue;
                }
                m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g;
                v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g * g;
                const double m_hat = m_[i][j] / bc1;
                const double v_hat = v_[i][j] / bc2;
                values[j] = static_cast<float>(static_cast<double>(values[j]) - lr_ * m_hat / (std::sqrt(v_hat) + eps));
            }
        }
    }

private:
    OptimizerKind kind_;
    double lr_;
    int t_ = 0;
    std::vector<Parameter<float>*> params_;
    std::vector<std::vector<double>> m_, v_;
};

struct MinErrAccum {
    double ade_sum = 0.0;
    double fde_sum = 0.0;
    long agents = 0;
};

// Adds each agent's oracle-minimum ADE/FDE for one predicted scene.
void accumulate_min_errors(const PredictionSet& pred, const Scene& scene, MinErrAccum& acc) {
    const auto abs = to_absolute(pred, scene);
    std::vector<double> gt(static_cast<std::size_t>(scene.t_out) * 2);
    std::vector<double> traj(static_cast<std::size_t>(scene.t_out) * 2);
    for (int k = 0; k < pred.agents; ++k) {
        double best_ade = std::numeric_limits<double>::infinity();
        double best_fde = std::numeric_limits<double>::infinity();
        for (int t = 0; t < scene.t_out; ++t) {
            gt[2 * t] = scene.pos(k, scene.t_in + t, 0);
            gt[2 * t + 1] = scene.pos(k, scene.t_in + t, 1);
        }
        for (int m = 0; m < pred.modes; ++m) {
            for (int t = 0; t < scene.t_out; ++t) {
                traj[2 * t] = abs[((static_cast<std::size_t>(m) * pred.t_out + t) * 2 + 0) * pred.agents + k];
                traj[2 * t + 1] = abs[((static_cast<std::size_t>(m) * pred.t_out + t) * 2 + 1) * pred.agents + k];
            }
            best_ade = std::min(best_ade, ade(traj, gt));
            best_fde = std::min(best_fde, fde(traj, gt));
        }
        acc.ade_sum += best_ade;
        acc.fde_sum += best_fde;
        ++acc.agents;
    }
}

}  // namespace

std::vector<PredDumpRow> predict_scenes(StageModel<float>& model, const std::vector<Scene>& scenes) {
    std::vector<PredDumpRow> rows;
    for (const auto& scene : scenes) {
        const auto pred = model.predict(scene, Mode::Eval);
        auto scene_rows = prediction_to_rows(pred, scene);
        rows.insert(rows.end(), scene_rows.begin(), scene_rows.end());
    }
    return rows;
}

std::pair<double, double> mean_min_errors(StageModel<float>& model, const std::vector<Scene>& scenes) {
    MinErrAccum acc;
    for (const auto& scene : scenes) {
        accumulate_min_errors(model.predict(scene, Mode::Eval), scene, acc);
    }
    if (acc.agents == 0) throw DataError("mean_min_errors: no agents");
    return {acc.ade_sum / static_cast<double>(acc.agents), acc.fde_sum / static_cast<double>(acc.agents)};
}

TrainResult train_single(const TrainConfig& cfg, int modes, const std::vector<Scene>& train_scenes,
                         const std::vector<Scene>& val_scenes) {
    cfg.validate();
    if (train_scenes.empty()) throw DataError("train_single: no training scenes");
    const std::vector<Scene>& val = val_scenes.empty() ? train_scenes : val_scenes;

    Rng rng = Rng(cfg.seed).derive(static_cast<std::uint64_t>(modes));
    ModelConfig mc;
    mc.modes = modes;
    mc.dropout_rate = cfg.dropout_rate;
    StageModel<float> model(mc, rng);
    Optimizer opt(cfg.optimizer, cfg.learning_rate, model.parameters());

    TrainResult result;
    result.log.modes = modes;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        EpochStats stats;
        stats.epoch = epoch;
        MinErrAccum train_acc;
        int pending = 0;
        for (std::size_t idx : order) {
            const Scene& scene = train_scenes[idx];
            auto out = model.forward_scene(scene, Mode::Train, &rng);
            auto loss = total_loss<float>(out, scene, cfg.reg_norm);
            if (!std::isfinite(loss.breakdown.total)) {
                result.diverged = true;
                result.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", scene " +
                                    std::to_string(scene.scene_id) + " (M=" + std::to_string(modes) + ")";
                result.log.epochs.push_back(stats);
                return result;
            }
            backward(loss.total);
            if (++pending >= cfg.grad_accumulation) {
                opt.step();
                model.zero_grad();
                pending = 0;
            }
            stats.train_total += loss.breakdown.total;
            stats.train_reg += loss.breakdown.l_reg_min;
            stats.train_ce += loss.breakdown.l_ce;
            accumulate_min_errors(model.to_prediction_set(out), scene, train_acc);
        }
        if (pending > 0) {
            opt.step();
            model.zero_grad();
        }
        const double n = static_cast<double>(train_scenes.size());
        stats.train_total /= n;
        stats.train_reg /= n;
        stats.train_ce /= n;
        stats.train_ade_min = train_acc.ade_sum / static_cast<double>(train_acc.agents);

        const auto [val_ade, val_fde] = mean_min_errors(model, val);
        stats.val_ade_min = val_ade;
        stats.val_fde_min = val_fde;
        stats.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(stats);

        if (val_ade < best_val) {
            best_val = val_ade;
            result.log.best_epoch = epoch;
            result.best_checkpoint = serialize_checkpoint(model);
        }
    }
    result.final_checkpoint = serialize_checkpoint(model);

    // Full validation metrics with the best checkpoint.
    {
        const auto records = parse_checkpoint(result.best_checkpoint);
        ModelConfig best_cfg = config_from_records(records);
        best_cfg.dropout_rate = cfg.dropout_rate;
        Rng init(0);
        StageModel<float> best(best_cfg, init);
        load_into_model(best, records);
        const auto dump = predict_scenes(best, val);
        result.val_oracle = evaluate_dataset(dump, val, BestModeRule::Oracle);
        result.val_pmax = evaluate_dataset(dump, val, BestModeRule::PMax);
    }
    return result;
}

std::vector<TrainResult> train_sweep(const TrainConfig& cfg, const std::vector<Scene>& train_scenes,
                                     const std::vector<Scene>& val_scenes) {
    cfg.validate();
    std::vector<TrainResult> results;
    for (int m : cfg.mode_sweep) {
        results.push_back(train_single(cfg, m, train_scenes, val_scenes));
    }
    return results;
}

std::string train_log_to_csv(const TrainLog& log, bool include_wall) {
    std::string out = "epoch,train_total,train_reg,train_ce,train_ade_min,val_ade_min,val_fde_min";
    if (include_wall) out += ",wall_s";
    out += "\n";
    for (const auto& e : log.epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += format_double(e.train_total);
        out += ',';
        out += format_double(e.train_reg);
        out += ',';
        out += format_double(e.train_ce);
        out += ',';
        out += format_double(e.train_ade_min);
        out += ',';
        out += format_double(e.val_ade_min);
        out += ',';
        out += format_double(e.val_fde_min);
        if (include_wall) {
            out += ',';
            out += format_double(e.wall_s);
        }
        out += '\n';
    }
    out += "# best_epoch=" + std::to_string(log.best_epoch) + "\n";
    return out;
}

std::vector<SweepRow> sweep_report(const std::vector<TrainResult>& results) {
    if (results.empty()) throw ContractError("sweep_report: no completed runs");
    std::vector<SweepRow> rows;
    int best_idx = -1;
    for (const auto& r : results) {
        SweepRow row;
        row.modes = r.log.modes;
        row.diverged = r.diverged;
        if (!r.diverged) {
            row.ade_min = r.val_oracle.ade_min;
            row.fde_min = r.val_oracle.fde_min;
            row.ade_pmax = r.val_pmax.ade;
            row.fde_pmax = r.val_pmax.fde;
            row.m1 = r.val_oracle.m1_ade;
            row.m2 = r.val_pmax.m2_ade;
            if (best_idx < 0 || row.ade_min < rows[best_idx].ade_min) {
                best_idx = static_cast<int>(rows.size());
            }
        }
        rows.push_back(row);
    }
    if (best_idx >= 0) rows[best_idx].best = true;
    return rows;
}

std::string sweep_report_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "M,ADE_min,FDE_min,ADE_pmax,FDE_pmax,M1,M2,best\n";
    for (const auto& r : rows) {
        out += std::to_string(r.modes);
        out += ',';
        if (r.diverged) {
            out += "diverged,diverged,diverged,diverged,diverged,diverged,0\n";
            continue;
        }
        out += format_double(r.ade_min);
        out += ',';
        out += format_double(r.fde_min);
        out += ',';
        out += format_double(r.ade_pmax);
        out += ',';
        out += format_double(r.fde_pmax);
        out += ',';
        out += format_double(r.m1);
        out += ',';
        out += format_double(r.m2);
        out += ',';
        out += r.best ? "1" : "0";
        out += '\n';
    }
    return out;
}

}  // namespace sstage

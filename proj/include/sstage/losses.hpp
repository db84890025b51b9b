#pragma once

#include <vector>

#include "sstage/model.hpp"

namespace sstage {

// How the per-agent regression error over a candidate future is measured:
// either the norm of the whole stacked (t_out x 2) residual, or the sum of
// per-step point distances. The argmin can differ between the two.
enum class RegNorm { StackedL2, PerStepSum };

struct LossBreakdown {
    double total = 0.0;
    double l_reg_min = 0.0;
    double l_ce = 0.0;
    std::vector<int> m_min;  // selected mode per agent
};

double mode_error(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes, int t_out, int agents,
                  int mode, int agent, RegNorm policy);

// Per agent, the mode with the smallest regression error; ties break to the
// lowest index. pred_abs is [M][t_out][2][K], gt is [t_out][2][K].
std::vector<int> min_error_mode(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes,
                                int t_out, int agents, RegNorm policy = RegNorm::StackedL2);

// Sum over agents of the selected mode's regression error.
double reg_loss_min(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes, int t_out,
                    int agents, RegNorm policy = RegNorm::StackedL2);

// Cross entropy against the one-hot minimum-error assignment:
// sum_k -ln(probs[m_min(k), k]), log argument clamped at 1e-12.
double ce_loss(const std::vector<double>& probs, const std::vector<int>& m_min, int modes, int agents);

template <class S>
struct LossResult {
    Tensor<S> total;  // one element, backward-capable
    LossBreakdown breakdown;
};

// Differentiable composite loss for one scene. The mode assignment is
// computed from current values and then treated as constant, so only the
// selected mode's displacements receive regression gradient; all mode
// probabilities receive gradient through the softmax.
template <class S>
LossResult<S> total_loss(const typename StageModel<S>::Output& out, const Scene& scene,
                         RegNorm policy = RegNorm::StackedL2) {
    const auto& sh = out.displacements.shape();
    const int m_n = sh[1], t_n = sh[2], d_n = sh[3], k_n = sh[4];
    if (k_n != scene.agents()) {
        throw DimensionError("total_loss: prediction agents (=" + std::to_string(k_n) + ") vs scene agents (=" +
                             std::to_string(scene.agents()) + ")");
    }
    if (t_n != scene.t_out) throw DimensionError("total_loss: horizon mismatch");

    const auto last = last_observed(scene);
    std::vector<S> last_s(last.size());
    for (std::size_t i = 0; i < last.size(); ++i) last_s[i] = static_cast<S>(last[i]);

    auto abs = add_const(cumsum(out.displacements, 2), last_s);

    const auto gt = ground_truth_future(scene);
    std::vector<double> abs_d(abs.values().begin(), abs.values().end());
    const auto m_min = min_error_mode(abs_d, gt, m_n, t_n, k_n, policy);

    auto selected = select_mode(abs, m_min);  // [1, t_out, 2, K]
    std::vector<S> gt_s(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) gt_s[i] = static_cast<S>(gt[i]);
    auto residual = sub_const(selected, gt_s);

    Tensor<S> per_agent;
    if (policy == RegNorm::StackedL2) {
        per_agent = l2_norm_per_last(residual);  // [K]
    } else {
        per_agent = sum_axis(l2_norm_axis(residual, 2), 1);  // [1,t,K] -> [1,K]
    }
    auto reg = sum_all(per_agent);
    auto ce = nll_selected(out.probs, m_min);
    auto total = add(reg, ce);

    LossResult<S> result;
    result.total = total;
    result.breakdown.l_reg_min = static_cast<double>(reg.item());
    result.breakdown.l_ce = static_cast<double>(ce.item());
    result.breakdown.total = result.breakdown.l_reg_min + result.breakdown.l_ce;
    result.breakdown.m_min = m_min;
    (void)d_n;
    return result;
}

}  // namespace sstage

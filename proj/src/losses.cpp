#include "sstage/losses.hpp"

#include <cmath>

namespace sstage {

double mode_error(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes, int t_out, int agents,
                  int mode, int agent, RegNorm policy) {
    (void)modes;
    auto at = [&](int m, int t, int d, int k) {
        return pred_abs[((static_cast<std::size_t>(m) * t_out + t) * 2 + d) * agents + k];
    };
    auto gt_at = [&](int t, int d, int k) { return gt[(static_cast<std::size_t>(t) * 2 + d) * agents + k]; };
    if (policy == RegNorm::StackedL2) {
        double ssq = 0.0;
        for (int t = 0; t < t_out; ++t) {
            for (int d = 0; d < 2; ++d) {
                const double r = at(mode, t, d, agent) - gt_at(t, d, agent);
                ssq += r * r;
            }
        }
        return std::sqrt(ssq);
    }
    double sum = 0.0;
    for (int t = 0; t < t_out; ++t) {
        const double rx = at(mode, t, 0, agent) - gt_at(t, 0, agent);
        const double ry = at(mode, t, 1, agent) - gt_at(t, 1, agent);
        sum += std::sqrt(rx * rx + ry * ry);
    }
    return sum;
}

std::vector<int> min_error_mode(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes,
                                int t_out, int agents, RegNorm policy) {
    if (modes < 1) throw ContractError("min_error_mode: need at least one mode");
    std::vector<int> result(agents, 0);
    for (int k = 0; k < agents; ++k) {
        double best = mode_error(pred_abs, gt, modes, t_out, agents, 0, k, policy);
        for (int m = 1; m < modes; ++m) {
            const double e = mode_error(pred_abs, gt, modes, t_out, agents, m, k, policy);
            if (e < best) {
                best = e;
                result[k] = m;
            }
        }
    }
    return result;
}

double reg_loss_min(const std::vector<double>& pred_abs, const std::vector<double>& gt, int modes, int t_out,
                    int agents, RegNorm policy) {
    const auto m_min = min_error_mode(pred_abs, gt, modes, t_out, agents, policy);
    double total = 0.0;
    for (int k = 0; k < agents; ++k) {
        total += mode_error(pred_abs, gt, modes, t_out, agents, m_min[k], k, policy);
    }
    return total;
}

double ce_loss(const std::vector<double>& probs, const std::vector<int>& m_min, int modes, int agents) {
    if (static_cast<int>(m_min.size()) != agents) throw ContractError("ce_loss: m_min size mismatch");
    double total = 0.0;
    for (int k = 0; k < agents; ++k) {
        const int m = m_min[k];
        if (m < 0 || m >= modes) throw ContractError("ce_loss: mode index out of range");
        const double p = probs[static_cast<std::size_t>(m) * agents + k];
        total -= std::log(std::max(p, 1e-12));
    }
    return total;
}

}  // namespace sstage

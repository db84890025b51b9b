#include "sstage/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace sstage {

std::string to_string(BestModeRule rule) {
    switch (rule) {
        case BestModeRule::PMax: return "p_max";
        case BestModeRule::Mean: return "mean";
        case BestModeRule::Oracle: return "oracle";
    }
    return "?";
}

BestModeRule best_mode_rule_from_string(const std::string& s) {
    if (s == "p_max") return BestModeRule::PMax;
    if (s == "mean") return BestModeRule::Mean;
    if (s == "oracle") return BestModeRule::Oracle;
    throw ParameterError("unknown best-mode rule '" + s + "' (expected p_max, mean, or oracle)");
}

double ade(const std::vector<double>& pred_abs, const std::vector<double>& gt) {
    if (pred_abs.size() != gt.size() || pred_abs.size() % 2 != 0 || pred_abs.empty()) {
        throw DimensionError("ade: trajectories must both be [t,2]");
    }
    const std::size_t t_n = pred_abs.size() / 2;
    double sum = 0.0;
    for (std::size_t t = 0; t < t_n; ++t) {
        const double dx = pred_abs[2 * t] - gt[2 * t];
        const double dy = pred_abs[2 * t + 1] - gt[2 * t + 1];
        sum += std::sqrt(dx * dx + dy * dy);
    }
    return sum / static_cast<double>(t_n);
}

double fde(const std::vector<double>& pred_abs, const std::vector<double>& gt) {
    if (pred_abs.size() != gt.size() || pred_abs.size() % 2 != 0 || pred_abs.empty()) {
        throw DimensionError("fde: trajectories must both be [t,2]");
    }
    const std::size_t last = pred_abs.size() - 2;
    const double dx = pred_abs[last] - gt[last];
    const double dy = pred_abs[last + 1] - gt[last + 1];
    return std::sqrt(dx * dx + dy * dy);
}

std::pair<double, double> min_metrics(const ModeErrors& errors) {
    if (errors.ade.empty() || errors.ade.size() != errors.fde.size()) {
        throw ContractError("min_metrics: need matching non-empty ade/fde");
    }
    return {*std::min_element(errors.ade.begin(), errors.ade.end()),
            *std::min_element(errors.fde.begin(), errors.fde.end())};
}

double m1(const std::vector<double>& errors, double e_hat) {
    if (errors.empty()) throw ContractError("m1: no modes");
    double sum = 0.0;
    for (double e : errors) sum += e;
    return (sum - e_hat) / static_cast<double>(errors.size());
}

double m2(const std::vector<double>& errors, const std::vector<double>& probs) {
    if (errors.empty()) throw ContractError("m2: no modes");
    if (errors.size() != probs.size()) {
        throw ContractError("m2: mode probabilities are required and must match the error count");
    }
    double expectation = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) expectation += probs[i] * errors[i];
    std::size_t p_max_idx = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[p_max_idx]) p_max_idx = i;
    }
    return expectation - probs[p_max_idx] * errors[p_max_idx];
}

std::pair<int, double> select_best_mode(const std::vector<double>& errors, const std::vector<double>* probs,
                                        BestModeRule rule, std::optional<double> mean_error) {
    if (errors.empty()) throw ContractError("select_best_mode: no modes");
    switch (rule) {
        case BestModeRule::PMax: {
            if (probs == nullptr || probs->size() != errors.size()) {
                throw ContractError("select_best_mode: p_max rule requires per-mode probabilities");
            }
            std::size_t best = 0;
            for (std::size_t i = 1; i < probs->size(); ++i) {
                if ((*probs)[i] > (*probs)[best]) best = i;
            }
            return {static_cast<int>(best), errors[best]};
        }
        case BestModeRule::Mean: {
            if (!mean_error.has_value()) {
                throw ContractError("select_best_mode: mean rule requires the mean-mode error");
            }
            return {-1, *mean_error};
        }
        case BestModeRule::Oracle: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < errors.size(); ++i) {
                if (errors[i] < errors[best]) best = i;
            }
            return {static_cast<int>(best), errors[best]};
        }
    }
    throw ContractError("select_best_mode: bad rule");
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_csv_double(std::string_view tok, long line) {
    double v;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("bad numeric field '" + std::string(tok) + "'", line);
    }
    return v;
}

long parse_csv_long(std::string_view tok, long line) {
    long v;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("bad integer field '" + std::string(tok) + "'", line);
    }
    return v;
}

}  // namespace

std::string dump_to_csv(const std::vector<PredDumpRow>& rows) {
    std::string out = "scene_id,agent_id,mode,prob,t,x,y\n";
    for (const auto& r : rows) {
        out += std::to_string(r.scene_id);
        out += ',';
        out += std::to_string(r.agent_id);
        out += ',';
        out += std::to_string(r.mode);
        out += ',';
        out += format_double(r.prob);
        out += ',';
        out += std::to_string(r.t);
        out += ',';
        out += format_double(r.x);
        out += ',';
        out += format_double(r.y);
        out += '\n';
    }
    return out;
}

std::vector<PredDumpRow> dump_from_csv(std::istream& in) {
    std::vector<PredDumpRow> rows;
    std::string line;
    long line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "scene_id,agent_id,mode,prob,t,x,y") {
                throw ParseError("unexpected dump header '" + line + "'", line_no);
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> fields;
        std::string_view sv = line;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = sv.find(',', pos);
            if (comma == std::string_view::npos) {
                fields.push_back(sv.substr(pos));
                break;
            }
            fields.push_back(sv.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (fields.size() != 7) throw ParseError("expected 7 fields, got " + std::to_string(fields.size()), line_no);
        PredDumpRow r;
        r.scene_id = parse_csv_long(fields[0], line_no);
        r.agent_id = parse_csv_long(fields[1], line_no);
        r.mode = static_cast<int>(parse_csv_long(fields[2], line_no));
        r.prob = parse_csv_double(fields[3], line_no);
        r.t = static_cast<int>(parse_csv_long(fields[4], line_no));
        r.x = parse_csv_double(fields[5], line_no);
        r.y = parse_csv_double(fields[6], line_no);
        rows.push_back(r);
    }
    if (!header_seen) throw DataError("prediction dump is empty (missing header)");
    return rows;
}

std::vector<PredDumpRow> dump_from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prediction dump: " + path);
    return dump_from_csv(in);
}

void write_dump_file(const std::string& path, const std::vector<PredDumpRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write prediction dump: " + path);
    out << dump_to_csv(rows);
}

std::vector<PredDumpRow> prediction_to_rows(const PredictionSet& pred, const Scene& scene) {
    const auto abs = to_absolute(pred, scene);
    std::vector<PredDumpRow> rows;
    rows.reserve(static_cast<std::size_t>(pred.agents) * pred.modes * pred.t_out);
    for (int k = 0; k < pred.agents; ++k) {
        for (int m = 0; m < pred.modes; ++m) {
            for (int t = 0; t < pred.t_out; ++t) {
                PredDumpRow r;
                r.scene_id = scene.scene_id;
                r.agent_id = scene.agent_ids[k];
                r.mode = m;
                r.prob = pred.prob(m, k);
                r.t = t + 1;
                r.x = abs[((static_cast<std::size_t>(m) * pred.t_out + t) * 2 + 0) * pred.agents + k];
                r.y = abs[((static_cast<std::size_t>(m) * pred.t_out + t) * 2 + 1) * pred.agents + k];
                rows.push_back(r);
            }
        }
    }
    return rows;
}

MetricsReport evaluate_dataset(const std::vector<PredDumpRow>& dump, const std::vector<Scene>& scenes,
                               BestModeRule rule) {
    // (scene, agent) -> mode -> (prob, trajectory)
    struct AgentPred {
        std::map<int, std::pair<double, std::vector<double>>> modes;  // t-major [t][2]
    };
    std::map<std::pair<long, long>, AgentPred> by_agent;
    for (const auto& r : dump) {
        auto& ap = by_agent[{r.scene_id, r.agent_id}];
        auto& [prob, traj] = ap.modes[r.mode];
        prob = r.prob;
        if (r.t < 1) throw DataError("dump row has t < 1");
        const std::size_t need = static_cast<std::size_t>(r.t) * 2;
        if (traj.size() < need) traj.resize(need, std::numeric_limits<double>::quiet_NaN());
        traj[need - 2] = r.x;
        traj[need - 1] = r.y;
    }

    MetricsReport report;
    report.best_mode_rule = rule;
    double sum_ade = 0, sum_fde = 0, sum_ade_min = 0, sum_fde_min = 0;
    double sum_m1_ade = 0, sum_m1_fde = 0, sum_m2_ade = 0, sum_m2_fde = 0;
    long agents = 0;
    int global_modes = -1;

    for (const auto& scene : scenes) {
        const int t_n = scene.t_out;
        for (int k = 0; k < scene.agents(); ++k) {
            const auto key = std::make_pair(scene.scene_id, scene.agent_ids[k]);
            auto it = by_agent.find(key);
            if (it == by_agent.end()) {
                throw DataError("no prediction for scene " + std::to_string(scene.scene_id) + " agent " +
                                std::to_string(scene.agent_ids[k]));
            }
            const int m_n = static_cast<int>(it->second.modes.size());
            if (global_modes == -1) global_modes = m_n;
            if (m_n != global_modes) {
                throw DataError("inconsistent mode count for scene " + std::to_string(scene.scene_id) + " agent " +
                                std::to_string(scene.agent_ids[k]));
            }
            std::vector<double> gt(static_cast<std::size_t>(t_n) * 2);
            for (int t = 0; t < t_n; ++t) {
                gt[2 * t] = scene.pos(k, scene.t_in + t, 0);
                gt[2 * t + 1] = scene.pos(k, scene.t_in + t, 1);
            }
            ModeErrors errors;
            std::vector<double> probs;
            std::vector<double> mean_traj(static_cast<std::size_t>(t_n) * 2, 0.0);
            for (const auto& [mode, entry] : it->second.modes) {
                const auto& traj = entry.second;
                if (traj.size() != gt.size()) {
                    throw DataError("prediction for scene " + std::to_string(scene.scene_id) + " agent " +
                                    std::to_string(scene.agent_ids[k]) + " mode " + std::to_string(mode) +
                                    " has wrong horizon");
                }
                for (double v : traj) {
                    if (std::isnan(v)) {
                        throw DataError("prediction for scene " + std::to_string(scene.scene_id) + " agent " +
                                        std::to_string(scene.agent_ids[k]) + " mode " + std::to_string(mode) +
                                        " has missing steps");
                    }
                }
                errors.ade.push_back(ade(traj, gt));
                errors.fde.push_back(fde(traj, gt));
                probs.push_back(entry.first);
                for (std::size_t i = 0; i < traj.size(); ++i) mean_traj[i] += traj[i] / static_cast<double>(m_n);
            }
            errors.probs = probs;

            const auto [ade_min_k, fde_min_k] = min_metrics(errors);
            std::optional<double> mean_ade, mean_fde;
            if (rule == BestModeRule::Mean) {
                mean_ade = ade(mean_traj, gt);
                mean_fde = fde(mean_traj, gt);
            }
            const auto [idx_a, e_hat_ade] = select_best_mode(errors.ade, &probs, rule, mean_ade);
            const auto [idx_f, e_hat_fde] = select_best_mode(errors.fde, &probs, rule, mean_fde);
            (void)idx_a;
            (void)idx_f;

            sum_ade += e_hat_ade;
            sum_fde += e_hat_fde;
            sum_ade_min += ade_min_k;
            sum_fde_min += fde_min_k;
            sum_m1_ade += m1(errors.ade, e_hat_ade);
            sum_m1_fde += m1(errors.fde, e_hat_fde);
            sum_m2_ade += m2(errors.ade, probs);
            sum_m2_fde += m2(errors.fde, probs);
            ++agents;
        }
    }
    if (agents == 0) throw DataError("evaluate_dataset: no agents to evaluate");
    report.ade = sum_ade / static_cast<double>(agents);
    report.fde = sum_fde / static_cast<double>(agents);
    report.ade_min = sum_ade_min / static_cast<double>(agents);
    report.fde_min = sum_fde_min / static_cast<double>(agents);
    report.m1_ade = sum_m1_ade / static_cast<double>(agents);
    report.m1_fde = sum_m1_fde / static_cast<double>(agents);
    report.m2_ade = sum_m2_ade / static_cast<double>(agents);
    report.m2_fde = sum_m2_fde / static_cast<double>(agents);
    report.n_agents = agents;
    return report;
}

std::string report_to_csv(const std::vector<MetricsReport>& reports) {
    std::string out = "rule,ade,fde,ade_min,fde_min,m1_ade,m1_fde,m2_ade,m2_fde,n_agents\n";
    for (const auto& r : reports) {
        out += to_string(r.best_mode_rule);
        out += ',';
        out += format_double(r.ade);
        out += ',';
        out += format_double(r.fde);
        out += ',';
        out += format_double(r.ade_min);
        out += ',';
        out += format_double(r.fde_min);
        out += ',';
        out += format_double(r.m1_ade);
        out += ',';
        out += format_double(r.m1_fde);
        out += ',';
        out += format_double(r.m2_ade);
        out += ',';
        out += format_double(r.m2_fde);
        out += ',';
        out += std::to_string(r.n_agents);
        out += '\n';
    }
    return out;
}

std::string report_to_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << "rule      ADE     FDE     ADE_min FDE_min M1_ade  M1_fde  M2_ade  M2_fde  agents\n";
    os.setf(std::ios::fixed);
    os.precision(4);
    for (const auto& r : reports) {
        std::string rule = to_string(r.best_mode_rule);
        rule.resize(8, ' ');
        os << rule << "  " << r.ade << "  " << r.fde << "  " << r.ade_min << "  " << r.fde_min << "  " << r.m1_ade
           << "  " << r.m1_fde << "  " << r.m2_ade << "  " << r.m2_fde << "  " << r.n_agents << "\n";
    }
    return os.str();
}

}  // namespace sstage

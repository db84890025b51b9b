#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sstage/graph.hpp"
#include "sstage/tensor.hpp"

namespace sstage {

struct ModelConfig {
    int modes = 2;  // M
    int t_in = kTIn;
    int t_out = kTOut;
    int d_in = 2;
    int d_out = 2;
    double dropout_rate = 0.1;
    double prelu_init = 0.25;

    int traj_channels() const { return modes * t_out; }
    int prob_in_channels() const { return d_in * t_in; }

    void validate() const {
        if (modes < 1) throw ParameterError("model: modes must be >= 1, got " + std::to_string(modes));
        if (t_in < 2 || t_out < 1) throw ParameterError("model: invalid horizon");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ParameterError("model: dropout_rate must be in [0,1)");
    }
};

// Multi-modal candidate futures for one scene, as plain arrays.
struct PredictionSet {
    int modes = 0;
    int t_out = kTOut;
    int agents = 0;
    std::vector<double> displacements;  // [M][t_out][2][K], meters/step
    std::vector<double> probs;          // [M][K], each agent column sums to 1

    double disp(int m, int t, int d, int k) const {
        return displacements[((static_cast<std::size_t>(m) * t_out + t) * 2 + d) * agents + k];
    }
    double prob(int m, int k) const { return probs[static_cast<std::size_t>(m) * agents + k]; }
};

// Integrates displacements from the last observed position:
// abs[m][t] = x_{t_in} + sum_{tau<=t} disp[m][tau]. Layout [M][t_out][2][K].
std::vector<double> to_absolute(const PredictionSet& pred, const Scene& scene);

// Ground-truth future positions, laid out [t_out][2][K].
std::vector<double> ground_truth_future(const Scene& scene);

// Last observed position per agent, laid out [2][K].
std::vector<double> last_observed(const Scene& scene);

using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

// ---------------------------------------------------------------------------
// The forecaster: a graph-convolution block over per-step motions, a
// spatio-temporal attention block with a residual connection, and a
// two-stream decoder producing M displacement modes plus their per-agent
// probabilities. Templated on the scalar so the gradient suite can run the
// whole network in double precision.
// ---------------------------------------------------------------------------

template <class S>
class StageModel {
public:
    struct Output {
        Tensor<S> displacements;  // [1, M, t_out, 2, K]
        Tensor<S> probs;          // [M, K]
        int agents = 0;
    };

    StageModel(const ModelConfig& config, Rng& init_rng) : cfg_(config) {
        cfg_.validate();
        const int c = cfg_.d_in;
        l1_bn1_ = make_bn("l1.bn1", c);
        l1_prelu_ = make_prelu("l1.prelu");
        l1_conv_ = make_conv("l1.conv", c, c, 3, 1, init_rng);
        l1_bn2_ = make_bn("l1.bn2", c);
        l2_conv_ = make_conv("l2.conv", c, c, 1, 1, init_rng);
        l2_prelu_ = make_prelu("l2.prelu");
        attn_bn1_ = make_bn("attn.bn1", c);
        attn_prelu_ = make_prelu("attn.prelu");
        attn_conv_ = make_conv("attn.conv", c, c, 3, 1, init_rng);
        attn_bn2_ = make_bn("attn.bn2", c);
        d_conv_ = make_conv("d.conv", cfg_.t_in, cfg_.traj_channels(), 3, 3, init_rng);
        d_prelu_ = make_prelu("d.prelu");
        traj_conv_ = make_conv("traj.conv", cfg_.traj_channels(), cfg_.traj_channels(), 3, 3, init_rng);
        prob_conv_ = make_conv("prob.conv", cfg_.prob_in_channels(), cfg_.modes, 3, 3, init_rng);
        register_all();
    }

    // The registry points into members; the model stays where it is built.
    StageModel(const StageModel&) = delete;
    StageModel& operator=(const StageModel&) = delete;
    StageModel(StageModel&&) = delete;
    StageModel& operator=(StageModel&&) = delete;

    const ModelConfig& config() const { return cfg_; }

    // dropout_rng may be null in eval mode or when dropout_rate is 0.
    Output forward(const GraphSequence& g, Mode mode, Rng* dropout_rng, bool update_bn = true,
                   ShapeTrace* trace = nullptr) {
        if (g.agents < 1) throw ContractError("forward: scene must contain at least one agent");
        if (mode == Mode::Train && cfg_.dropout_rate > 0.0 && dropout_rng == nullptr) {
            throw ContractError("forward: train mode with dropout requires an RNG");
        }
        const int k_n = g.agents;
        const int t_n = cfg_.t_in;
        auto rec = [trace](const char* name, const Tensor<S>& t) {
            if (trace) trace->emplace_back(name, t.shape());
        };

        auto x = Tensor<S>::template from_cast<double>({1, cfg_.d_in, t_n, k_n}, g.node_features);
        auto adj = std::make_shared<std::vector<S>>(g.adjacency.size());
        for (std::size_t i = 0; i < g.adjacency.size(); ++i) (*adj)[i] = static_cast<S>(g.adjacency[i]);

        x = batch_norm2d(x, l1_bn1_.gamma.tensor, l1_bn1_.beta.tensor, l1_bn1_.running, mode, update_bn);
        rec("l1.bn1", x);
        x = prelu(x, l1_prelu_.tensor);
        rec("l1.prelu", x);
        x = conv2d(x, l1_conv_.weight.tensor, l1_conv_.bias.tensor, 1, 0);
        rec("l1.conv", x);
        x = batch_norm2d(x, l1_bn2_.gamma.tensor, l1_bn2_.beta.tensor, l1_bn2_.running, mode, update_bn);
        rec("l1.bn2", x);
        if (mode == Mode::Train && cfg_.dropout_rate > 0.0) {
            x = dropout(x, cfg_.dropout_rate, mode, *dropout_rng);
        }
        rec("l1.dropout", x);
        x = conv2d(x, l2_conv_.weight.tensor, l2_conv_.bias.tensor, 0, 0);
        rec("l2.conv", x);
        x = prelu(x, l2_prelu_.tensor);
        rec("l2.prelu", x);
        x = graph_mix(x, std::shared_ptr<const std::vector<S>>(adj), t_n, k_n);
        rec("graph_mix", x);

        // Attention weights over the whole (time, agent) grid per channel;
        // applied multiplicatively with a residual connection.
        auto f = x;
        auto a = batch_norm2d(f, attn_bn1_.gamma.tensor, attn_bn1_.beta.tensor, attn_bn1_.running, mode, update_bn);
        rec("attn.bn1", a);
        a = prelu(a, attn_prelu_.tensor);
        rec("attn.prelu", a);
        a = conv2d(a, attn_conv_.weight.tensor, attn_conv_.bias.tensor, 1, 0);
        rec("attn.conv", a);
        a = batch_norm2d(a, attn_bn2_.gamma.tensor, attn_bn2_.beta.tensor, attn_bn2_.running, mode, update_bn);
        rec("attn.bn2", a);
        a = reshape(a, {1, cfg_.d_in, t_n * k_n});
        a = softmax(a, 2);
        a = reshape(a, {1, cfg_.d_in, t_n, k_n});
        rec("attn.softmax", a);
        x = add(mul(a, f), f);
        rec("attn.apply", x);

        // Trajectory stream: the time axis becomes the channel axis.
        auto tr = permute(x, {0, 2, 1, 3});  // [1, t_in, d_in, K]
        tr = conv2d(tr, d_conv_.weight.tensor, d_conv_.bias.tensor, 1, 1);
        rec("d.conv", tr);
        tr = prelu(tr, d_prelu_.tensor);
        rec("d.prelu", tr);
        tr = conv2d(tr, traj_conv_.weight.tensor, traj_conv_.bias.tensor, 1, 1);
        rec("traj.conv", tr);

        // Probability stream: (channel, time) folded together, one conv down
        // to M channels, softmax across modes per agent.
        auto pr = reshape(x, {1, cfg_.prob_in_channels(), 1, k_n});
        pr = conv2d(pr, prob_conv_.weight.tensor, prob_conv_.bias.tensor, 1, 1);
        rec("prob.conv", pr);
        pr = softmax(pr, 1);
        auto probs = reshape(pr, {cfg_.modes, k_n});

        auto disp = reshape(tr, {1, cfg_.modes, cfg_.t_out, cfg_.d_out, k_n});
        rec("traj.reshape", disp);

        return Output{disp, probs, k_n};
    }

    Output forward_scene(const Scene& scene, Mode mode, Rng* dropout_rng, bool update_bn = true) {
        const auto g = build_graph(scene);
        return forward(g, mode, dropout_rng, update_bn);
    }

    PredictionSet predict(const Scene& scene, Mode mode = Mode::Eval, Rng* dropout_rng = nullptr) {
        auto out = forward_scene(scene, mode, dropout_rng, mode == Mode::Train);
        return to_prediction_set(out);
    }

    PredictionSet to_prediction_set(const Output& out) const {
        PredictionSet p;
        p.modes = cfg_.modes;
        p.t_out = cfg_.t_out;
        p.agents = out.agents;
        p.displacements.assign(out.displacements.values().begin(), out.displacements.values().end());
        p.probs.assign(out.probs.values().begin(), out.probs.values().end());
        return p;
    }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> ps;
        for (auto* p : param_refs_) ps.push_back(p);
        return ps;
    }

    // Parameters plus batch-norm running statistics: everything a checkpoint
    // must carry to reproduce eval outputs exactly.
    struct StateEntry {
        std::string name;
        Shape shape;
        std::vector<S>* values;
    };
    std::vector<StateEntry> state_entries() {
        std::vector<StateEntry> entries;
        for (auto* p : param_refs_) {
            entries.push_back({p->name, p->tensor.shape(), &p->tensor.values()});
        }
        for (auto& [name, bn] : bn_refs_) {
            entries.push_back({name + ".running_mean", {static_cast<int>(bn->running.mean.size())}, &bn->running.mean});
            entries.push_back({name + ".running_var", {static_cast<int>(bn->running.var.size())}, &bn->running.var});
        }
        return entries;
    }

    void zero_grad() {
        for (auto* p : param_refs_) p->tensor.zero_grad();
    }

private:
    struct Bn {
        Parameter<S> gamma, beta;
        RunningStats<S> running;
    };
    struct Conv {
        Parameter<S> weight, bias;
    };

    Bn make_bn(const std::string& name, int channels) {
        Bn bn;
        bn.gamma = Parameter<S>{name + ".gamma", Tensor<S>::filled({channels}, S(1)).set_requires_grad(true)};
        bn.beta = Parameter<S>{name + ".beta", Tensor<S>::zeros({channels}).set_requires_grad(true)};
        bn.running = RunningStats<S>::init(channels);
        return bn;
    }

    Parameter<S> make_prelu(const std::string& name) {
        return Parameter<S>{name + ".alpha",
                            Tensor<S>::filled({1}, static_cast<S>(cfg_.prelu_init)).set_requires_grad(true)};
    }

    Conv make_conv(const std::string& name, int c_in, int c_out, int kh, int kw, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * kh * kw);
        Conv conv;
        conv.weight = Parameter<S>{name + ".weight",
                                   Tensor<S>::uniform({c_in, c_out, kh, kw}, rng, -bound, bound).set_requires_grad(true)};
        conv.bias = Parameter<S>{name + ".bias", Tensor<S>::zeros({c_out}).set_requires_grad(true)};
        return conv;
    }

    void register_all() {
        auto reg_bn = [this](const std::string& name, Bn& bn) {
            param_refs_.push_back(&bn.gamma);
            param_refs_.push_back(&bn.beta);
            bn_refs_.emplace_back(name, &bn);
        };
        reg_bn("l1.bn1", l1_bn1_);
        param_refs_.push_back(&l1_prelu_);
        param_refs_.push_back(&l1_conv_.weight);
        param_refs_.push_back(&l1_conv_.bias);
        reg_bn("l1.bn2", l1_bn2_);
        param_refs_.push_back(&l2_conv_.weight);
        param_refs_.push_back(&l2_conv_.bias);
        param_refs_.push_back(&l2_prelu_);
        reg_bn("attn.bn1", attn_bn1_);
        param_refs_.push_back(&attn_prelu_);
        param_refs_.push_back(&attn_conv_.weight);
        param_refs_.push_back(&attn_conv_.bias);
        reg_bn("attn.bn2", attn_bn2_);
        param_refs_.push_back(&d_conv_.weight);
        param_refs_.push_back(&d_conv_.bias);
        param_refs_.push_back(&d_prelu_);
        param_refs_.push_back(&traj_conv_.weight);
        param_refs_.push_back(&traj_conv_.bias);
        param_refs_.push_back(&prob_conv_.weight);
        param_refs_.push_back(&prob_conv_.bias);
    }

    ModelConfig cfg_;
    Bn l1_bn1_, l1_bn2_, attn_bn1_, attn_bn2_;
    Parameter<S> l1_prelu_, l2_prelu_, attn_prelu_, d_prelu_;
    Conv l1_conv_, l2_conv_, attn_conv_, d_conv_, traj_conv_, prob_conv_;
    std::vector<Parameter<S>*> param_refs_;
    std::vector<std::pair<std::string, Bn*>> bn_refs_;
};

}  // namespace sstage

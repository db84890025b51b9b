#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sstage/common.hpp"
#include "sstage/kernels.hpp"

namespace sstage {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    std::vector<std::int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        st[i] = st[i + 1] * shape[i + 1];
    }
    return st;
}

enum class Mode { Train, Eval };

// ---------------------------------------------------------------------------
// Tensor: dense row-major array with a same-shape gradient buffer and a
// dynamic tape. Each forward op produces a fresh node whose backprop closure
// scatters into the parents' grad buffers; the graph is rebuilt every forward
// pass, which keeps variable agent counts trivial.
// ---------------------------------------------------------------------------

template <class S>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<S> values;
        std::vector<S> grad;  // zero after creation and after zero_grad()
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;  // empty for leaves
    };

    Tensor() = default;

    static Tensor zeros(Shape shape) { return filled(std::move(shape), S(0)); }

    static Tensor filled(Shape shape, S value) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->values.assign(static_cast<std::size_t>(numel(t.node_->shape)), value);
        t.node_->grad.assign(t.node_->values.size(), S(0));
        return t;
    }

    static Tensor from(Shape shape, std::vector<S> values) {
        if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
            throw DimensionError("tensor: value count " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        t.node_->grad.assign(t.node_->values.size(), S(0));
        return t;
    }

    template <class U>
    static Tensor from_cast(Shape shape, const std::vector<U>& values) {
        std::vector<S> v(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<S>(values[i]);
        return from(std::move(shape), std::move(v));
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        Tensor t = zeros(std::move(shape));
        for (S& x : t.node_->values) x = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->values.size()); }
    std::vector<S>& values() { return node_->values; }
    const std::vector<S>& values() const { return node_->values; }
    std::vector<S>& grad() { return node_->grad; }
    const std::vector<S>& grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool f) {
        node_->requires_grad = f;
        return *this;
    }

    S item() const {
        if (size() != 1) throw ContractError("item: tensor has " + std::to_string(size()) + " elements, expected 1");
        return node_->values[0];
    }

    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), S(0)); }

    std::shared_ptr<Node> node() const { return node_; }

    static Tensor wrap(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

// Fresh node whose requires_grad is inherited from any parent.
template <class S>
Tensor<S> make_op(Shape shape, std::vector<Tensor<S>> parents, std::function<void(typename Tensor<S>::Node&)> backprop) {
    auto out = Tensor<S>::zeros(std::move(shape));
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    out.node()->requires_grad = needs;
    if (needs) {
        out.node()->parents.reserve(parents.size());
        for (auto& p : parents) out.node()->parents.push_back(p.node());
        out.node()->backprop = std::move(backprop);
    }
    return out;
}

}  // namespace detail

// Reverse-mode sweep from a one-element loss. Grad buffers of interior nodes
// are reset per call; leaves accumulate until explicitly zeroed, so two
// sweeps from the same loss double the leaf gradients.
template <class S>
void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must have exactly one element, got shape " + shape_str(loss.shape()));
    }
    using Node = typename Tensor<S>::Node;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->parents.empty()) std::fill(n->grad.begin(), n->grad.end(), S(0));
    }
    loss.node()->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and structural primitives
// ---------------------------------------------------------------------------

template <class S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape("add", a, b);
    auto out = detail::make_op<S>(
        a.shape(), {a, b}, [](typename Tensor<S>::Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if (n.parents[0]->requires_grad) n.parents[0]->grad[i] += n.grad[i];
                if (n.parents[1]->requires_grad) n.parents[1]->grad[i] += n.grad[i];
            }
        });
    for (std::int64_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape("mul", a, b);
    auto out = detail::make_op<S>(
        a.shape(), {a, b}, [av = a.values(), bv = b.values()](typename Tensor<S>::Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if (n.parents[0]->requires_grad) n.parents[0]->grad[i] += n.grad[i] * bv[i];
                if (n.parents[1]->requires_grad) n.parents[1]->grad[i] += n.grad[i] * av[i];
            }
        });
    for (std::int64_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    return out;
}

// out = x + c, with c broadcast over the leading axes of x (c matches the
// trailing axes). c carries no gradient.
template <class S>
Tensor<S> add_const(const Tensor<S>& x, const std::vector<S>& c) {
    if (x.size() % static_cast<std::int64_t>(c.size()) != 0) {
        throw DimensionError("add_const: trailing block of " + std::to_string(c.size()) +
                             " does not divide tensor of shape " + shape_str(x.shape()));
    }
    auto out = detail::make_op<S>(
        x.shape(), {x}, [](typename Tensor<S>::Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        });
    const std::size_t block = c.size();
    for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] = x.values()[i] + c[i % block];
    return out;
}

template <class S>
Tensor<S> sub_const(const Tensor<S>& x, const std::vector<S>& c) {
    std::vector<S> neg(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) neg[i] = -c[i];
    return add_const(x, neg);
}

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto out = detail::make_op<S>(
        std::move(shape), {x}, [](typename Tensor<S>::Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        });
    out.values() = x.values();
    return out;
}

template <class S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes) {
    const auto& in_shape = x.shape();
    if (axes.size() != in_shape.size()) {
        throw DimensionError("permute: axes rank " + std::to_string(axes.size()) + " vs tensor rank " +
                             std::to_string(in_shape.size()));
    }
    std::vector<bool> used(axes.size(), false);
    Shape out_shape(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const int a = axes[i];
        if (a < 0 || a >= static_cast<int>(axes.size()) || used[a]) {
            throw DimensionError("permute: axes are not a bijection");
        }
        used[a] = true;
        out_shape[i] = in_shape[a];
    }
    const auto in_strides = row_major_strides(in_shape);
    const auto out_strides = row_major_strides(out_shape);
    const std::int64_t n = x.size();
    // Map flat output index -> flat input index once; reused by backprop.
    auto mapping = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    for (std::int64_t o = 0; o < n; ++o) {
        std::int64_t rem = o, in_idx = 0;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            const std::int64_t q = rem / out_strides[i];
            rem -= q * out_strides[i];
            in_idx += q * in_strides[axes[i]];
        }
        (*mapping)[static_cast<std::size_t>(o)] = in_idx;
    }
    auto out = detail::make_op<S>(
        out_shape, {x}, [mapping](typename Tensor<S>::Node& n) {
            for (std::size_t o = 0; o < n.grad.size(); ++o) {
                n.parents[0]->grad[static_cast<std::size_t>((*mapping)[o])] += n.grad[o];
            }
        });
    for (std::int64_t o = 0; o < n; ++o) {
        out.values()[static_cast<std::size_t>(o)] = x.values()[static_cast<std::size_t>((*mapping)[static_cast<std::size_t>(o)])];
    }
    return out;
}

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2) {
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    if (a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: inner axis mismatch, a axis 1 (=" + std::to_string(a.shape()[1]) +
                             ") vs b axis 0 (=" + std::to_string(b.shape()[0]) + ")");
    }
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    auto out = detail::make_op<S>(
        {m, n}, {a, b}, [av = a.values(), bv = b.values(), m, k, n](typename Tensor<S>::Node& nd) {
            // dA = G B^T, dB = A^T G
            if (nd.parents[0]->requires_grad) {
                for (int i = 0; i < m; ++i) {
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += static_cast<double>(nd.grad[i * n + j]) * static_cast<double>(bv[p * n + j]);
                        nd.parents[0]->grad[i * k + p] += static_cast<S>(acc);
                    }
                }
            }
            if (nd.parents[1]->requires_grad) {
                for (int p = 0; p < k; ++p) {
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i) acc += static_cast<double>(av[i * k + p]) * static_cast<double>(nd.grad[i * n + j]);
                        nd.parents[1]->grad[p * n + j] += static_cast<S>(acc);
                    }
                }
            }
        });
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += static_cast<double>(a.values()[i * k + p]) * static_cast<double>(b.values()[p * n + j]);
            out.values()[i * n + j] = static_cast<S>(acc);
        }
    }
    return out;
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
    auto out = detail::make_op<S>(
        {1}, {x}, [](typename Tensor<S>::Node& n) {
            const S g = n.grad[0];
            for (auto& pg : n.parents[0]->grad) pg += g;
        });
    double acc = 0.0;
    for (const S v : x.values()) acc += static_cast<double>(v);
    out.values()[0] = static_cast<S>(acc);
    return out;
}

// Reduce one axis away: out[outer, inner] = sum_axis x[outer, axis, inner].
template <class S>
Tensor<S> sum_axis(const Tensor<S>& x, int axis) {
    const auto& sh = x.shape();
    if (axis < 0 || axis >= static_cast<int>(sh.size())) {
        throw DimensionError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(sh));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n_axis = sh[axis];
    Shape out_shape;
    for (int i = 0; i < static_cast<int>(sh.size()); ++i) {
        if (i != axis) out_shape.push_back(sh[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    auto out = detail::make_op<S>(
        out_shape, {x}, [outer, inner, n_axis](typename Tensor<S>::Node& n) {
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t a = 0; a < n_axis; ++a) {
                    for (std::int64_t i = 0; i < inner; ++i) {
                        n.parents[0]->grad[(o * n_axis + a) * inner + i] += n.grad[o * inner + i];
                    }
                }
            }
        });
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::int64_t a = 0; a < n_axis; ++a) acc += static_cast<double>(x.values()[(o * n_axis + a) * inner + i]);
            out.values()[o * inner + i] = static_cast<S>(acc);
        }
    }
    return out;
}

// Full-tensor Euclidean norm. Gradient at the origin is taken as zero.
template <class S>
Tensor<S> l2_norm(const Tensor<S>& x) {
    double ssq = 0.0;
    for (const S v : x.values()) ssq += static_cast<double>(v) * static_cast<double>(v);
    const S norm = static_cast<S>(std::sqrt(ssq));
    auto out = detail::make_op<S>(
        {1}, {x}, [xv = x.values(), norm](typename Tensor<S>::Node& n) {
            if (norm <= S(1e-12)) return;
            const S g = n.grad[0];
            for (std::size_t i = 0; i < xv.size(); ++i) n.parents[0]->grad[i] += g * xv[i] / norm;
        });
    out.values()[0] = norm;
    return out;
}

// Euclidean norm over all axes except the last: out[k] = ||x[..., k]||_2.
template <class S>
Tensor<S> l2_norm_per_last(const Tensor<S>& x) {
    const auto& sh = x.shape();
    if (sh.empty()) throw DimensionError("l2_norm_per_last: scalar input");
    const std::int64_t k_n = sh.back();
    const std::int64_t rows = x.size() / k_n;
    std::vector<S> norms(static_cast<std::size_t>(k_n), S(0));
    for (std::int64_t k = 0; k < k_n; ++k) {
        double ssq = 0.0;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double v = static_cast<double>(x.values()[r * k_n + k]);
            ssq += v * v;
        }
        norms[static_cast<std::size_t>(k)] = static_cast<S>(std::sqrt(ssq));
    }
    auto out = detail::make_op<S>(
        {static_cast<int>(k_n)}, {x}, [xv = x.values(), norms, rows, k_n](typename Tensor<S>::Node& n) {
            for (std::int64_t k = 0; k < k_n; ++k) {
                const S norm = norms[static_cast<std::size_t>(k)];
                if (norm <= S(1e-12)) continue;
                const S g = n.grad[static_cast<std::size_t>(k)];
                for (std::int64_t r = 0; r < rows; ++r) {
                    n.parents[0]->grad[r * k_n + k] += g * xv[r * k_n + k] / norm;
                }
            }
        });
    out.values() = norms;
    return out;
}

// Euclidean norm reducing exactly one axis: out[outer, inner] = ||x[outer, :, inner]||_2.
template <class S>
Tensor<S> l2_norm_axis(const Tensor<S>& x, int axis) {
    const auto& sh = x.shape();
    if (axis < 0 || axis >= static_cast<int>(sh.size())) {
        throw DimensionError("l2_norm_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(sh));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n_axis = sh[axis];
    Shape out_shape;
    for (int i = 0; i < static_cast<int>(sh.size()); ++i) {
        if (i != axis) out_shape.push_back(sh[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    std::vector<S> norms(static_cast<std::size_t>(outer * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double ssq = 0.0;
            for (std::int64_t a = 0; a < n_axis; ++a) {
                const double v = static_cast<double>(x.values()[(o * n_axis + a) * inner + i]);
                ssq += v * v;
            }
            norms[o * inner + i] = static_cast<S>(std::sqrt(ssq));
        }
    }
    auto out = detail::make_op<S>(
        out_shape, {x}, [xv = x.values(), norms, outer, inner, n_axis](typename Tensor<S>::Node& n) {
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    const S norm = norms[o * inner + i];
                    if (norm <= S(1e-12)) continue;
                    const S g = n.grad[o * inner + i];
                    for (std::int64_t a = 0; a < n_axis; ++a) {
                        n.parents[0]->grad[(o * n_axis + a) * inner + i] += g * xv[(o * n_axis + a) * inner + i] / norm;
                    }
                }
            }
        });
    out.values() = norms;
    return out;
}

// ---------------------------------------------------------------------------
// Neural primitives
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> prelu(const Tensor<S>& x, const Tensor<S>& alpha) {
    if (alpha.size() != 1) {
        throw DimensionError("prelu: alpha must be a single shared slope, got " + shape_str(alpha.shape()));
    }
    const S a = alpha.values()[0];
    auto out = detail::make_op<S>(
        x.shape(), {x, alpha}, [xv = x.values(), a](typename Tensor<S>::Node& n) {
            double da = 0.0;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if (xv[i] >= S(0)) {
                    if (n.parents[0]->requires_grad) n.parents[0]->grad[i] += n.grad[i];
                } else {
                    if (n.parents[0]->requires_grad) n.parents[0]->grad[i] += n.grad[i] * a;
                    da += static_cast<double>(n.grad[i]) * static_cast<double>(xv[i]);
                }
            }
            if (n.parents[1]->requires_grad) n.parents[1]->grad[0] += static_cast<S>(da);
        });
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const S v = x.values()[i];
        out.values()[i] = v >= S(0) ? v : a * v;
    }
    return out;
}

// Train mode zeroes elements with probability `rate` and rescales survivors
// by 1/(1-rate); eval mode passes the input through untouched.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Mode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    if (mode == Mode::Eval || rate == 0.0) return x;
    const S scale = static_cast<S>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(x.size()));
    for (auto& m : *mask) m = rng.bernoulli(rate) ? 0 : 1;
    auto out = detail::make_op<S>(
        x.shape(), {x}, [mask, scale](typename Tensor<S>::Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if ((*mask)[i]) n.parents[0]->grad[i] += n.grad[i] * scale;
            }
        });
    for (std::int64_t i = 0; i < x.size(); ++i) {
        out.values()[i] = (*mask)[static_cast<std::size_t>(i)] ? x.values()[i] * scale : S(0);
    }
    return out;
}

template <class S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    const auto& sh = x.shape();
    if (axis < 0 || axis >= static_cast<int>(sh.size())) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(sh));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n_axis = sh[axis];
    auto out = Tensor<S>::zeros(sh);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t a = 0; a < n_axis; ++a) {
                mx = std::max(mx, static_cast<double>(x.values()[(o * n_axis + a) * inner + i]));
            }
            double denom = 0.0;
            for (std::int64_t a = 0; a < n_axis; ++a) {
                denom += std::exp(static_cast<double>(x.values()[(o * n_axis + a) * inner + i]) - mx);
            }
            for (std::int64_t a = 0; a < n_axis; ++a) {
                const double e = std::exp(static_cast<double>(x.values()[(o * n_axis + a) * inner + i]) - mx);
                out.values()[(o * n_axis + a) * inner + i] = static_cast<S>(e / denom);
            }
        }
    }
    auto result = detail::make_op<S>(
        sh, {x}, [yv = out.values(), outer, inner, n_axis](typename Tensor<S>::Node& n) {
            // dx = y * (g - sum(g*y)) along the softmax axis
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    double dot = 0.0;
                    for (std::int64_t a = 0; a < n_axis; ++a) {
                        const std::int64_t idx = (o * n_axis + a) * inner + i;
                        dot += static_cast<double>(n.grad[idx]) * static_cast<double>(yv[idx]);
                    }
                    for (std::int64_t a = 0; a < n_axis; ++a) {
                        const std::int64_t idx = (o * n_axis + a) * inner + i;
                        n.parents[0]->grad[idx] += static_cast<S>(static_cast<double>(yv[idx]) * (static_cast<double>(n.grad[idx]) - dot));
                    }
                }
            }
        });
    result.values() = out.values();
    return result;
}

// ---------------------------------------------------------------------------
// conv2d. Weight layout is [Cin, Cout, kh, kw]; stride is fixed at 1 and
// padding is explicit, which covers every layer this model family uses.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, int pad_h, int pad_w) {
    const auto& ish = input.shape();
    const auto& wsh = weight.shape();
    if (ish.size() != 4) throw DimensionError("conv2d: input must be rank 4 [B,Cin,H,W], got " + shape_str(ish));
    if (wsh.size() != 4) throw DimensionError("conv2d: weight must be rank 4 [Cin,Cout,kh,kw], got " + shape_str(wsh));
    if (ish[1] != wsh[0]) {
        throw DimensionError("conv2d: input channel axis 1 (=" + std::to_string(ish[1]) +
                             ") does not match weight axis 0 (=" + std::to_string(wsh[0]) + ")");
    }
    if (bias.shape() != Shape{wsh[1]}) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match output channels (=" +
                             std::to_string(wsh[1]) + ")");
    }
    if (wsh[2] % 2 == 0 || wsh[3] % 2 == 0) {
        throw ParameterError("conv2d: kernel sides must be odd, got " + shape_str(wsh));
    }
    kernels::Conv2dDims dims{ish[0], ish[1], ish[2], ish[3], wsh[1], wsh[2], wsh[3], pad_h, pad_w};
    if (dims.out_h() < 1) {
        throw DimensionError("conv2d: height axis 2 collapses (H=" + std::to_string(ish[2]) + ", kh=" +
                             std::to_string(wsh[2]) + ", pad_h=" + std::to_string(pad_h) + ")");
    }
    if (dims.out_w() < 1) {
        throw DimensionError("conv2d: width axis 3 collapses (W=" + std::to_string(ish[3]) + ", kw=" +
                             std::to_string(wsh[3]) + ", pad_w=" + std::to_string(pad_w) + ")");
    }
    const auto exec = kernels::execution();
    auto out = detail::make_op<S>(
        {dims.batch, dims.c_out, dims.out_h(), dims.out_w()}, {input, weight, bias},
        [iv = input.values(), wv = weight.values(), dims, exec](typename Tensor<S>::Node& n) {
            if (n.parents[0]->requires_grad) {
                kernels::conv2d_backward_input(n.grad.data(), wv.data(), n.parents[0]->grad.data(), dims, exec);
            }
            if (n.parents[1]->requires_grad) {
                kernels::conv2d_backward_weight(n.grad.data(), iv.data(), n.parents[1]->grad.data(), dims, exec);
            }
            if (n.parents[2]->requires_grad) {
                kernels::conv2d_backward_bias(n.grad.data(), n.parents[2]->grad.data(), dims, exec);
            }
        });
    kernels::conv2d_forward(input.values().data(), weight.values().data(), bias.values().data(), out.values().data(),
                            dims, exec);
    return out;
}

// ---------------------------------------------------------------------------
// Graph mixing: contracts the agent axis with a per-step normalized adjacency
// stack. The adjacency is data, not a parameter; no gradient flows into it.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> graph_mix(const Tensor<S>& x, std::shared_ptr<const std::vector<S>> adj, int t_n, int k_n) {
    const auto& sh = x.shape();
    if (sh.size() != 4) throw DimensionError("graph_mix: input must be rank 4 [B,C,T,K], got " + shape_str(sh));
    if (sh[2] != t_n) {
        throw DimensionError("graph_mix: time axis 2 (=" + std::to_string(sh[2]) + ") does not match adjacency steps (=" +
                             std::to_string(t_n) + ")");
    }
    if (sh[3] != k_n) {
        throw DimensionError("graph_mix: agent axis 3 (=" + std::to_string(sh[3]) + ") does not match adjacency size (=" +
                             std::to_string(k_n) + ")");
    }
    if (static_cast<std::int64_t>(adj->size()) != static_cast<std::int64_t>(t_n) * k_n * k_n) {
        throw DimensionError("graph_mix: adjacency buffer does not hold [T,K,K]");
    }
    const int b_n = sh[0], c_n = sh[1];
    const auto exec = kernels::execution();
    auto out = detail::make_op<S>(
        sh, {x}, [adj, b_n, c_n, t_n, k_n, exec](typename Tensor<S>::Node& n) {
            kernels::graph_mix_backward(n.grad.data(), adj->data(), n.parents[0]->grad.data(), b_n, c_n, t_n, k_n, exec);
        });
    kernels::graph_mix_forward(x.values().data(), adj->data(), out.values().data(), b_n, c_n, t_n, k_n, exec);
    return out;
}

// ---------------------------------------------------------------------------
// Loss-path primitives
// ---------------------------------------------------------------------------

// Running sum along one axis; backward is the reversed running sum.
template <class S>
Tensor<S> cumsum(const Tensor<S>& x, int axis) {
    const auto& sh = x.shape();
    if (axis < 0 || axis >= static_cast<int>(sh.size())) {
        throw DimensionError("cumsum: axis " + std::to_string(axis) + " out of range for " + shape_str(sh));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n_axis = sh[axis];
    auto out = detail::make_op<S>(
        sh, {x}, [outer, inner, n_axis](typename Tensor<S>::Node& n) {
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    double acc = 0.0;
                    for (std::int64_t a = n_axis - 1; a >= 0; --a) {
                        acc += static_cast<double>(n.grad[(o * n_axis + a) * inner + i]);
                        n.parents[0]->grad[(o * n_axis + a) * inner + i] += static_cast<S>(acc);
                    }
                }
            }
        });
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::int64_t a = 0; a < n_axis; ++a) {
                acc += static_cast<double>(x.values()[(o * n_axis + a) * inner + i]);
                out.values()[(o * n_axis + a) * inner + i] = static_cast<S>(acc);
            }
        }
    }
    return out;
}

// Gathers one mode per agent out of [1, M, T, D, K]; backward scatters into
// the selected slots only, so non-selected modes get exactly zero gradient.
template <class S>
Tensor<S> select_mode(const Tensor<S>& x, const std::vector<int>& mode_per_agent) {
    const auto& sh = x.shape();
    if (sh.size() != 5 || sh[0] != 1) {
        throw DimensionError("select_mode: input must be [1,M,T,D,K], got " + shape_str(sh));
    }
    const int m_n = sh[1], t_n = sh[2], d_n = sh[3], k_n = sh[4];
    if (static_cast<int>(mode_per_agent.size()) != k_n) {
        throw DimensionError("select_mode: index count " + std::to_string(mode_per_agent.size()) +
                             " does not match agent axis 4 (=" + std::to_string(k_n) + ")");
    }
    for (int m : mode_per_agent) {
        if (m < 0 || m >= m_n) throw ContractError("select_mode: mode index " + std::to_string(m) + " out of range");
    }
    auto idx = std::make_shared<std::vector<int>>(mode_per_agent);
    auto out = detail::make_op<S>(
        {1, t_n, d_n, k_n}, {x}, [idx, m_n, t_n, d_n, k_n](typename Tensor<S>::Node& n) {
            for (int t = 0; t < t_n; ++t) {
                for (int d = 0; d < d_n; ++d) {
                    for (int k = 0; k < k_n; ++k) {
                        const int m = (*idx)[static_cast<std::size_t>(k)];
                        n.parents[0]->grad[(((0 * m_n + m) * t_n + t) * d_n + d) * k_n + k] +=
                            n.grad[((0 * t_n + t) * d_n + d) * k_n + k];
                    }
                }
            }
        });
    for (int t = 0; t < t_n; ++t) {
        for (int d = 0; d < d_n; ++d) {
            for (int k = 0; k < k_n; ++k) {
                const int m = (*idx)[static_cast<std::size_t>(k)];
                out.values()[((0 * t_n + t) * d_n + d) * k_n + k] =
                    x.values()[(((0 * m_n + m) * t_n + t) * d_n + d) * k_n + k];
            }
        }
    }
    return out;
}

// Negative log of the selected mode's probability, summed over agents.
// probs is [M, K]; the log argument is clamped below at `clamp`.
template <class S>
Tensor<S> nll_selected(const Tensor<S>& probs, const std::vector<int>& mode_per_agent, double clamp = 1e-12) {
    const auto& sh = probs.shape();
    if (sh.size() != 2) throw DimensionError("nll_selected: probs must be [M,K], got " + shape_str(sh));
    const int m_n = sh[0], k_n = sh[1];
    if (static_cast<int>(mode_per_agent.size()) != k_n) {
        throw DimensionError("nll_selected: index count does not match agent axis 1 (=" + std::to_string(k_n) + ")");
    }
    auto idx = std::make_shared<std::vector<int>>(mode_per_agent);
    for (int m : *idx) {
        if (m < 0 || m >= m_n) throw ContractError("nll_selected: mode index out of range");
    }
    auto out = detail::make_op<S>(
        {1}, {probs}, [idx, pv = probs.values(), k_n, clamp](typename Tensor<S>::Node& n) {
            const S g = n.grad[0];
            for (int k = 0; k < k_n; ++k) {
                const std::size_t at = static_cast<std::size_t>((*idx)[k]) * k_n + k;
                const double p = static_cast<double>(pv[at]);
                if (p > clamp) n.parents[0]->grad[at] -= static_cast<S>(static_cast<double>(g) / p);
            }
        });
    double acc = 0.0;
    for (int k = 0; k < k_n; ++k) {
        const double p = static_cast<double>(probs.values()[static_cast<std::size_t>((*idx)[k]) * k_n + k]);
        acc -= std::log(std::max(p, clamp));
    }
    out.values()[0] = static_cast<S>(acc);
    return out;
}

// ---------------------------------------------------------------------------
// Batch norm. Stateless free function; the model owns gamma/beta and the
// running statistics. Train mode normalizes with per-call batch statistics
// over (B,H,W) per channel; eval mode uses the running ones.
// ---------------------------------------------------------------------------

template <class S>
struct RunningStats {
    std::vector<S> mean;  // per channel
    std::vector<S> var;
    static RunningStats init(int channels) {
        return {std::vector<S>(channels, S(0)), std::vector<S>(channels, S(1))};
    }
};

template <class S>
Tensor<S> batch_norm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, RunningStats<S>& running,
                       Mode mode, bool update_running = true, double eps = 1e-5, double momentum = 0.1) {
    const auto& sh = x.shape();
    if (sh.size() != 4) throw DimensionError("batch_norm2d: input must be rank 4 [B,C,H,W], got " + shape_str(sh));
    const int b_n = sh[0], c_n = sh[1], h_n = sh[2], w_n = sh[3];
    if (gamma.shape() != Shape{c_n} || beta.shape() != Shape{c_n}) {
        throw DimensionError("batch_norm2d: gamma/beta must match channel axis 1 (=" + std::to_string(c_n) + ")");
    }
    if (static_cast<int>(running.mean.size()) != c_n) {
        throw DimensionError("batch_norm2d: running stats sized for " + std::to_string(running.mean.size()) +
                             " channels, input has " + std::to_string(c_n));
    }
    const std::int64_t n_per_c = static_cast<std::int64_t>(b_n) * h_n * w_n;
    std::vector<double> mean(c_n), inv_std(c_n);
    if (mode == Mode::Train) {
        for (int c = 0; c < c_n; ++c) {
            double sum = 0.0;
            for (int b = 0; b < b_n; ++b) {
                for (std::int64_t hw = 0; hw < static_cast<std::int64_t>(h_n) * w_n; ++hw) {
                    sum += static_cast<double>(x.values()[(static_cast<std::int64_t>(b) * c_n + c) * h_n * w_n + hw]);
                }
            }
            mean[c] = sum / static_cast<double>(n_per_c);
            double ssq = 0.0;
            for (int b = 0; b < b_n; ++b) {
                for (std::int64_t hw = 0; hw < static_cast<std::int64_t>(h_n) * w_n; ++hw) {
                    const double d = static_cast<double>(x.values()[(static_cast<std::int64_t>(b) * c_n + c) * h_n * w_n + hw]) - mean[c];
                    ssq += d * d;
                }
            }
            const double var = ssq / static_cast<double>(n_per_c);
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            if (update_running) {
                const double var_unbiased = n_per_c > 1 ? ssq / static_cast<double>(n_per_c - 1) : var;
                running.mean[c] = static_cast<S>((1.0 - momentum) * static_cast<double>(running.mean[c]) + momentum * mean[c]);
                running.var[c] = static_cast<S>((1.0 - momentum) * static_cast<double>(running.var[c]) + momentum * var_unbiased);
            }
        }
    } else {
        for (int c = 0; c < c_n; ++c) {
            mean[c] = static_cast<double>(running.mean[c]);
            inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running.var[c]) + eps);
        }
    }
    // Normalized activations are cached for both backward and the gamma grad.
    auto x_hat = std::make_shared<std::vector<S>>(x.values().size());
    for (int b = 0; b < b_n; ++b) {
        for (int c = 0; c < c_n; ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(b) * c_n + c) * h_n * w_n;
            for (std::int64_t hw = 0; hw < static_cast<std::int64_t>(h_n) * w_n; ++hw) {
                (*x_hat)[base + hw] = static_cast<S>((static_cast<double>(x.values()[base + hw]) - mean[c]) * inv_std[c]);
            }
        }
    }
    const bool batch_stats = mode == Mode::Train;
    auto out = detail::make_op<S>(
        sh, {x, gamma, beta},
        [x_hat, gv = gamma.values(), inv_std, b_n, c_n, h_n, w_n, n_per_c, batch_stats](typename Tensor<S>::Node& n) {
            const std::int64_t hw_n = static_cast<std::int64_t>(h_n) * w_n;
            for (int c = 0; c < c_n; ++c) {
                double g_sum = 0.0, g_dot_xhat = 0.0;
                for (int b = 0; b < b_n; ++b) {
                    const std::int64_t base = (static_cast<std::int64_t>(b) * c_n + c) * hw_n;
                    for (std::int64_t hw = 0; hw < hw_n; ++hw) {
                        g_sum += static_cast<double>(n.grad[base + hw]);
                        g_dot_xhat += static_cast<double>(n.grad[base + hw]) * static_cast<double>((*x_hat)[base + hw]);
                    }
                }
                if (n.parents[1]->requires_grad) n.parents[1]->grad[c] += static_cast<S>(g_dot_xhat);
                if (n.parents[2]->requires_grad) n.parents[2]->grad[c] += static_cast<S>(g_sum);
                if (!n.parents[0]->requires_grad) continue;
                const double scale = static_cast<double>(gv[c]) * inv_std[c];
                if (batch_stats) {
                    // dx = (gamma/sigma) * (g - mean(g) - x_hat * mean(g*x_hat))
                    const double mg = g_sum / static_cast<double>(n_per_c);
                    const double mgx = g_dot_xhat / static_cast<double>(n_per_c);
                    for (int b = 0; b < b_n; ++b) {
                        const std::int64_t base = (static_cast<std::int64_t>(b) * c_n + c) * hw_n;
                        for (std::int64_t hw = 0; hw < hw_n; ++hw) {
                            n.parents[0]->grad[base + hw] += static_cast<S>(
                                scale * (static_cast<double>(n.grad[base + hw]) - mg -
                                         static_cast<double>((*x_hat)[base + hw]) * mgx));
                        }
                    }
                } else {
                    for (int b = 0; b < b_n; ++b) {
                        const std::int64_t base = (static_cast<std::int64_t>(b) * c_n + c) * hw_n;
                        for (std::int64_t hw = 0; hw < hw_n; ++hw) {
                            n.parents[0]->grad[base + hw] += static_cast<S>(scale * static_cast<double>(n.grad[base + hw]));
                        }
                    }
                }
            }
        });
    for (int b = 0; b < b_n; ++b) {
        for (int c = 0; c < c_n; ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(b) * c_n + c) * h_n * w_n;
            for (std::int64_t hw = 0; hw < static_cast<std::int64_t>(h_n) * w_n; ++hw) {
                out.values()[base + hw] = gamma.values()[c] * (*x_hat)[base + hw] + beta.values()[c];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Named trainable tensor. Names are dot-paths and double as checkpoint keys.
// ---------------------------------------------------------------------------

template <class S>
struct Parameter {
    std::string name;
    Tensor<S> tensor;
};

}  // namespace sstage

#pragma once

#include <cstdint>

namespace sstage::kernels {

// Two interchangeable backends for the hot loops: a naive serial reference
// and an OpenMP version. Both accumulate each output element in double, in
// the same index order, so their results are bit-identical; tests assert
// exact equality and the bench tool compares throughput.
enum class Exec { Serial, Parallel };

Exec execution();
void set_execution(Exec e);
bool parallel_available();

struct Conv2dDims {
    int batch, c_in, h, w;       // input  [B, Cin, H, W]
    int c_out, kh, kw;           // weight [Cin, Cout, kh, kw]
    int pad_h, pad_w;
    int out_h() const { return h + 2 * pad_h - kh + 1; }
    int out_w() const { return w + 2 * pad_w - kw + 1; }
};

template <class S>
void conv2d_forward(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d, Exec e);

template <class S>
void conv2d_backward_input(const S* gout, const S* weight, S* gin, const Conv2dDims& d, Exec e);

template <class S>
void conv2d_backward_weight(const S* gout, const S* in, S* gweight, const Conv2dDims& d, Exec e);

template <class S>
void conv2d_backward_bias(const S* gout, S* gbias, const Conv2dDims& d, Exec e);

// Per-step node mixing: out[b,c,t,i] = sum_j adj[t,i,j] * x[b,c,t,j].
// adj is a [T, K, K] stack of constants (no gradient).
template <class S>
void graph_mix_forward(const S* x, const S* adj, S* out, int b, int c, int t, int k, Exec e);

// gin[b,c,t,j] = sum_i adj[t,i,j] * gout[b,c,t,i]
template <class S>
void graph_mix_backward(const S* gout, const S* adj, S* gin, int b, int c, int t, int k, Exec e);

}  // namespace sstage::kernels

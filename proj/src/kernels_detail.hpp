#pragma once

#include "sstage/kernels.hpp"

namespace sstage::kernels::detail {

template <class S>
void conv2d_forward_ref(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d);
template <class S>
void conv2d_backward_input_ref(const S* gout, const S* weight, S* gin, const Conv2dDims& d);
template <class S>
void conv2d_backward_weight_ref(const S* gout, const S* in, S* gweight, const Conv2dDims& d);
template <class S>
void conv2d_backward_bias_ref(const S* gout, S* gbias, const Conv2dDims& d);
template <class S>
void graph_mix_forward_ref(const S* x, const S* adj, S* out, int bn, int cn, int tn, int kn);
template <class S>
void graph_mix_backward_ref(const S* gout, const S* adj, S* gin, int bn, int cn, int tn, int kn);

template <class S>
void conv2d_forward_omp(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d);
template <class S>
void conv2d_backward_input_omp(const S* gout, const S* weight, S* gin, const Conv2dDims& d);
template <class S>
void conv2d_backward_weight_omp(const S* gout, const S* in, S* gweight, const Conv2dDims& d);
template <class S>
void conv2d_backward_bias_omp(const S* gout, S* gbias, const Conv2dDims& d);
template <class S>
void graph_mix_forward_omp(const S* x, const S* adj, S* out, int bn, int cn, int tn, int kn);
template <class S>
void graph_mix_backward_omp(const S* gout, const S* adj, S* gin, int bn, int cn, int tn, int kn);

}  // namespace sstage::kernels::detail

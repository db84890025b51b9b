#include "sstage/kernels.hpp"

#include <atomic>

#include "kernels_detail.hpp"

namespace sstage::kernels {

namespace {
std::atomic<Exec> g_exec{
#ifdef _OPENMP
    Exec::Parallel
#else
    Exec::Serial
#endif
};
}  // namespace

Exec execution() { return g_exec.load(std::memory_order_relaxed); }
void set_execution(Exec e) { g_exec.store(e, std::memory_order_relaxed); }

bool parallel_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

namespace {
inline bool use_omp(Exec e) { return parallel_available() && e == Exec::Parallel; }
}  // namespace

template <class S>
void conv2d_forward(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d, Exec e) {
    if (use_omp(e)) {
        detail::conv2d_forward_omp(in, weight, bias, out, d);
    } else {
        detail::conv2d_forward_ref(in, weight, bias, out, d);
    }
}

template <class S>
void conv2d_backward_input(const S* gout, const S* weight, S* gin, const Conv2dDims& d, Exec e) {
    if (use_omp(e)) {
        detail::conv2d_backward_input_omp(gout, weight, gin, d);
    } else {
        detail::conv2d_backward_input_ref(gout, weight, gin, d);
    }
}

template <class S>
void conv2d_backward_weight(const S* gout, const S* in, S* gweight, const Conv2dDims& d, Exec e) {
    if (use_omp(e)) {
        detail::conv2d_backward_weight_omp(gout, in, gweight, d);
    } else {
        detail::conv2d_backward_weight_ref(gout, in, gweight, d);
    }
}

template <class S>
void conv2d_backward_bias(const S* gout, S* gbias, const Conv2dDims& d, Exec e) {
    if (use_omp(e)) {
        detail::conv2d_backward_bias_omp(gout, gbias, d);
    } else {
        detail::conv2d_backward_bias_ref(gout, gbias, d);
    }
}

template <class S>
void graph_mix_forward(const S* x, const S* adj, S* out, int b, int c, int t, int k, Exec e) {
    if (use_omp(e)) {
        detail::graph_mix_forward_omp(x, adj, out, b, c, t, k);
    } else {
        detail::graph_mix_forward_ref(x, adj, out, b, c, t, k);
    }
}

template <class S>
void graph_mix_backward(const S* gout, const S* adj, S* gin, int b, int c, int t, int k, Exec e) {
    if (use_omp(e)) {
        detail::graph_mix_backward_omp(gout, adj, gin, b, c, t, k);
    } else {
        detail::graph_mix_backward_ref(gout, adj, gin, b, c, t, k);
    }
}

template void conv2d_forward<float>(const float*, const float*, const float*, float*, const Conv2dDims&, Exec);
template void conv2d_forward<double>(const double*, const double*, const double*, double*, const Conv2dDims&, Exec);
template void conv2d_backward_input<float>(const float*, const float*, float*, const Conv2dDims&, Exec);
template void conv2d_backward_input<double>(const double*, const double*, double*, const Conv2dDims&, Exec);
template void conv2d_backward_weight<float>(const float*, const float*, float*, const Conv2dDims&, Exec);
template void conv2d_backward_weight<double>(const double*, const double*, double*, const Conv2dDims&, Exec);
template void conv2d_backward_bias<float>(const float*, float*, const Conv2dDims&, Exec);
template void conv2d_backward_bias<double>(const double*, double*, const Conv2dDims&, Exec);
template void graph_mix_forward<float>(const float*, const float*, float*, int, int, int, int, Exec);
template void graph_mix_forward<double>(const double*, const double*, double*, int, int, int, int, Exec);
template void graph_mix_backward<float>(const float*, const float*, float*, int, int, int, int, Exec);
template void graph_mix_backward<double>(const double*, const double*, double*, int, int, int, int, Exec);

}  // namespace sstage::kernels

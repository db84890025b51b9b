#include "kernels_detail.hpp"

// OpenMP kernels. Every parallel loop ranges over disjoint output elements
// and each element keeps the reference accumulation order, so results match
// the serial kernels bit-for-bit for any thread count.

namespace sstage::kernels::detail {

template <class S>
void conv2d_forward_omp(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    const long total = static_cast<long>(d.batch) * d.c_out * oh_n * ow_n;
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < total; ++idx) {
        const int ow = static_cast<int>(idx % ow_n);
        const int oh = static_cast<int>((idx / ow_n) % oh_n);
        const int co = static_cast<int>((idx / (static_cast<long>(ow_n) * oh_n)) % d.c_out);
        const int b = static_cast<int>(idx / (static_cast<long>(ow_n) * oh_n * d.c_out));
        double acc = static_cast<double>(bias[co]);
        for (int ci = 0; ci < d.c_in; ++ci) {
            for (int i = 0; i < d.kh; ++i) {
                const int ih = oh + i - d.pad_h;
                if (ih < 0 || ih >= d.h) continue;
                for (int j = 0; j < d.kw; ++j) {
                    const int iw = ow + j - d.pad_w;
                    if (iw < 0 || iw >= d.w) continue;
                    acc += static_cast<double>(in[((b * d.c_in + ci) * d.h + ih) * d.w + iw]) *
                           static_cast<double>(weight[((ci * d.c_out + co) * d.kh + i) * d.kw + j]);
                }
            }
        }
        out[idx] = static_cast<S>(acc);
    }
}

template <class S>
void conv2d_backward_input_omp(const S* gout, const S* weight, S* gin, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    const long total = static_cast<long>(d.batch) * d.c_in * d.h * d.w;
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < total; ++idx) {
        const int iw = static_cast<int>(idx % d.w);
        const int ih = static_cast<int>((idx / d.w) % d.h);
        const int ci = static_cast<int>((idx / (static_cast<long>(d.w) * d.h)) % d.c_in);
        const int b = static_cast<int>(idx / (static_cast<long>(d.w) * d.h * d.c_in));
        double acc = 0.0;
        for (int co = 0; co < d.c_out; ++co) {
            for (int i = 0; i < d.kh; ++i) {
                const int oh = ih - i + d.pad_h;
                if (oh < 0 || oh >= oh_n) continue;
                for (int j = 0; j < d.kw; ++j) {
                    const int ow = iw - j + d.pad_w;
                    if (ow < 0 || ow >= ow_n) continue;
                    acc += static_cast<double>(gout[((b * d.c_out + co) * oh_n + oh) * ow_n + ow]) *
                           static_cast<double>(weight[((ci * d.c_out + co) * d.kh + i) * d.kw + j]);
                }
            }
        }
        gin[idx] += static_cast<S>(acc);
    }
}

template <class S>
void conv2d_backward_weight_omp(const S* gout, const S* in, S* gweight, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    const long total = static_cast<long>(d.c_in) * d.c_out * d.kh * d.kw;
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < total; ++idx) {
        const int j = static_cast<int>(idx % d.kw);
        const int i = static_cast<int>((idx / d.kw) % d.kh);
        const int co = static_cast<int>((idx / (static_cast<long>(d.kw) * d.kh)) % d.c_out);
        const int ci = static_cast<int>(idx / (static_cast<long>(d.kw) * d.kh * d.c_out));
        double acc = 0.0;
        for (int b = 0; b < d.batch; ++b) {
            for (int oh = 0; oh < oh_n; ++oh) {
                const int ih = oh + i - d.pad_h;
                if (ih < 0 || ih >= d.h) continue;
                for (int ow = 0; ow < ow_n; ++ow) {
                    const int iw = ow + j - d.pad_w;
                    if (iw < 0 || iw >= d.w) continue;
                    acc += static_cast<double>(gout[((b * d.c_out + co) * oh_n + oh) * ow_n + ow]) *
                           static_cast<double>(in[((b * d.c_in + ci) * d.h + ih) * d.w + iw]);
                }
            }
        }
        gweight[idx] += static_cast<S>(acc);
    }
}

template <class S>
void conv2d_backward_bias_omp(const S* gout, S* gbias, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.c_out; ++co) {
        double acc = 0.0;
        for (int b = 0; b < d.batch; ++b) {
            for (int oh = 0; oh < oh_n; ++oh) {
                for (int ow = 0; ow < ow_n; ++ow) {
                    acc += static_cast<double>(gout[((b * d.c_out + co) * oh_n + oh) * ow_n + ow]);
                }
            }
        }
        gbias[co] += static_cast<S>(acc);
    }
}

template <class S>
void graph_mix_forward_omp(const S* x, const S* adj, S* out, int bn, int cn, int tn, int kn) {
    const long rows = static_cast<long>(bn) * cn * tn;
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const int t = static_cast<int>(r % tn);
        const S* xrow = x + r * kn;
        const S* arow = adj + static_cast<long>(t) * kn * kn;
        S* orow = out + r * kn;
        for (int i = 0; i < kn; ++i) {
            double acc = 0.0;
            for (int j = 0; j < kn; ++j) {
                acc += static_cast<double>(arow[i * kn + j]) * static_cast<double>(xrow[j]);
            }
            orow[i] = static_cast<S>(acc);
        }
    }
}

template <class S>
void graph_mix_backward_omp(const S* gout, const S* adj, S* gin, int bn, int cn, int tn, int kn) {
    const long rows = static_cast<long>(bn) * cn * tn;
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const int t = static_cast<int>(r % tn);
        const S* grow = gout + r * kn;
        const S* arow = adj + static_cast<long>(t) * kn * kn;
        S* irow = gin + r * kn;
        for (int j = 0; j < kn; ++j) {
            double acc = 0.0;
            for (int i = 0; i < kn; ++i) {
                acc += static_cast<double>(arow[i * kn + j]) * static_cast<double>(grow[i]);
            }
            irow[j] += static_cast<S>(acc);
        }
    }
}

template void conv2d_forward_omp<float>(const float*, const float*, const float*, float*, const Conv2dDims&);
template void conv2d_forward_omp<double>(const double*, const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_input_omp<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_backward_input_omp<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_weight_omp<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_backward_weight_omp<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_bias_omp<float>(const float*, float*, const Conv2dDims&);
template void conv2d_backward_bias_omp<double>(const double*, double*, const Conv2dDims&);
template void graph_mix_forward_omp<float>(const float*, const float*, float*, int, int, int, int);
template void graph_mix_forward_omp<double>(const double*, const double*, double*, int, int, int, int);
template void graph_mix_backward_omp<float>(const float*, const float*, float*, int, int, int, int);
template void graph_mix_backward_omp<double>(const double*, const double*, double*, int, int, int, int);

}  // namespace sstage::kernels::detail

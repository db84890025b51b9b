#include "sstage/kernels.hpp"

// Serial reference kernels. Kept deliberately naive: these define the
// numerical ground truth the OpenMP variants are tested against.

namespace sstage::kernels::detail {

template <class S>
void conv2d_forward_ref(const S* in, const S* weight, const S* bias, S* out, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    for (int b = 0; b < d.batch; ++b) {
        for (int co = 0; co < d.c_out; ++co) {
            for (int oh = 0; oh < oh_n; ++oh) {
                for (int ow = 0; ow < ow_n; ++ow) {
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
                    out[((b * d.c_out + co) * oh_n + oh) * ow_n + ow] = static_cast<S>(acc);
                }
            }
        }
    }
}

template <class S>
void conv2d_backward_input_ref(const S* gout, const S* weight, S* gin, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    for (int b = 0; b < d.batch; ++b) {
        for (int ci = 0; ci < d.c_in; ++ci) {
            for (int ih = 0; ih < d.h; ++ih) {
                for (int iw = 0; iw < d.w; ++iw) {
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
                    gin[((b * d.c_in + ci) * d.h + ih) * d.w + iw] += static_cast<S>(acc);
                }
            }
        }
    }
}

template <class S>
void conv2d_backward_weight_ref(const S* gout, const S* in, S* gweight, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
    for (int ci = 0; ci < d.c_in; ++ci) {
        for (int co = 0; co < d.c_out; ++co) {
            for (int i = 0; i < d.kh; ++i) {
                for (int j = 0; j < d.kw; ++j) {
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
                    gweight[((ci * d.c_out + co) * d.kh + i) * d.kw + j] += static_cast<S>(acc);
                }
            }
        }
    }
}

template <class S>
void conv2d_backward_bias_ref(const S* gout, S* gbias, const Conv2dDims& d) {
    const int oh_n = d.out_h(), ow_n = d.out_w();
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
void graph_mix_forward_ref(const S* x, const S* adj, S* out, int bn, int cn, int tn, int kn) {
    for (int b = 0; b < bn; ++b) {
        for (int c = 0; c < cn; ++c) {
            for (int t = 0; t < tn; ++t) {
                const S* xrow = x + ((b * cn + c) * tn + t) * kn;
                const S* arow = adj + t * kn * kn;
                S* orow = out + ((b * cn + c) * tn + t) * kn;
                for (int i = 0; i < kn; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < kn; ++j) {
                        acc += static_cast<double>(arow[i * kn + j]) * static_cast<double>(xrow[j]);
                    }
                    orow[i] = static_cast<S>(acc);
                }
            }
        }
    }
}

template <class S>
void graph_mix_backward_ref(const S* gout, const S* adj, S* gin, int bn, int cn, int tn, int kn) {
    for (int b = 0; b < bn; ++b) {
        for (int c = 0; c < cn; ++c) {
            for (int t = 0; t < tn; ++t) {
                const S* grow = gout + ((b * cn + c) * tn + t) * kn;
                const S* arow = adj + t * kn * kn;
                S* irow = gin + ((b * cn + c) * tn + t) * kn;
                for (int j = 0; j < kn; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < kn; ++i) {
                        acc += static_cast<double>(arow[i * kn + j]) * static_cast<double>(grow[i]);
                    }
                    irow[j] += static_cast<S>(acc);
                }
            }
        }
    }
}

template void conv2d_forward_ref<float>(const float*, const float*, const float*, float*, const Conv2dDims&);
template void conv2d_forward_ref<double>(const double*, const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_input_ref<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_backward_input_ref<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_weight_ref<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_backward_weight_ref<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_backward_bias_ref<float>(const float*, float*, const Conv2dDims&);
template void conv2d_backward_bias_ref<double>(const double*, double*, const Conv2dDims&);
template void graph_mix_forward_ref<float>(const float*, const float*, float*, int, int, int, int);
template void graph_mix_forward_ref<double>(const double*, const double*, double*, int, int, int, int);
template void graph_mix_backward_ref<float>(const float*, const float*, float*, int, int, int, int);
template void graph_mix_backward_ref<double>(const double*, const double*, double*, int, int, int, int);

}  // namespace sstage::kernels::detail

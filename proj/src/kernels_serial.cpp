#include "mmcap/kernels.hpp"

#include <cmath>

// Reference kernels. Straight loops, no threading; the parallel backend is
// checked bitwise against these.

namespace mmcap::kernels::serial {

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            float acc = accumulate ? crow[j] : 0.0f;
            for (int64_t p = 0; p < k; ++p) {
                acc += arow[p] * b[p * n + j];
            }
            crow[j] = acc;
        }
    }
}

void gemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float acc = accumulate ? crow[j] : 0.0f;
            for (int64_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] = acc;
        }
    }
}

void gemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            float acc = accumulate ? crow[j] : 0.0f;
            for (int64_t p = 0; p < k; ++p) {
                acc += a[p * m + i] * b[p * n + j];
            }
            crow[j] = acc;
        }
    }
}

void conv2d_forward(const float* x, const float* kern, const float* mask, float* y,
                    const Conv2dDims& d) {
    const int64_t plane = d.height * d.width;
    for (int64_t b = 0; b < d.batch; ++b) {
        const float* xb = x + b * d.c_in * plane;
        float* yb = y + b * d.c_out * plane;
        for (int64_t co = 0; co < d.c_out; ++co) {
            float* yplane = yb + co * plane;
            const float* kc = kern + co * d.c_in * d.k_h * d.k_w;
            for (int64_t oh = 0; oh < d.height; ++oh) {
                for (int64_t ow = 0; ow < d.width; ++ow) {
                    float acc = 0.0f;
                    for (int64_t ci = 0; ci < d.c_in; ++ci) {
                        const float* xplane = xb + ci * plane;
                        const float* kk = kc + ci * d.k_h * d.k_w;
                        for (int64_t kh = 0; kh < d.k_h; ++kh) {
                            const int64_t ih = oh - d.pad_h + kh;
                            if (ih < 0 || ih >= d.height) {
                                continue;
                            }
                            for (int64_t kw = 0; kw < d.k_w; ++kw) {
                                if (mask && mask[kh * d.k_w + kw] == 0.0f) {
                                    continue;
                                }
                                const int64_t iw = ow - d.pad_w + kw;
                                if (iw < 0 || iw >= d.width) {
                                    continue;
                                }
                                acc += xplane[ih * d.width + iw] * kk[kh * d.k_w + kw];
                            }
                        }
                    }
                    yplane[oh * d.width + ow] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const float* dy, const float* kern, const float* mask, float* dx,
                           const Conv2dDims& d, bool accumulate) {
    const int64_t plane = d.height * d.width;
    for (int64_t b = 0; b < d.batch; ++b) {
        const float* dyb = dy + b * d.c_out * plane;
        float* dxb = dx + b * d.c_in * plane;
        for (int64_t ci = 0; ci < d.c_in; ++ci) {
            float* dxplane = dxb + ci * plane;
            for (int64_t ih = 0; ih < d.height; ++ih) {
                for (int64_t iw = 0; iw < d.width; ++iw) {
                    float acc = accumulate ? dxplane[ih * d.width + iw] : 0.0f;
                    for (int64_t co = 0; co < d.c_out; ++co) {
                        const float* dyplane = dyb + co * plane;
                        const float* kk = kern + (co * d.c_in + ci) * d.k_h * d.k_w;
                        for (int64_t kh = 0; kh < d.k_h; ++kh) {
                            const int64_t oh = ih + d.pad_h - kh;
                            if (oh < 0 || oh >= d.height) {
                                continue;
                            }
                            for (int64_t kw = 0; kw < d.k_w; ++kw) {
                                if (mask && mask[kh * d.k_w + kw] == 0.0f) {
                                    continue;
                                }
                                const int64_t ow = iw + d.pad_w - kw;
                                if (ow < 0 || ow >= d.width) {
                                    continue;
                                }
                                acc += kk[kh * d.k_w + kw] * dyplane[oh * d.width + ow];
                            }
                        }
                    }
                    dxplane[ih * d.width + iw] = acc;
                }
            }
        }
    }
}

void conv2d_backward_kernel(const float* x, const float* dy, const float* mask, float* dk,
                            const Conv2dDims& d, bool accumulate) {
    const int64_t plane = d.height * d.width;
    const int64_t ksz = d.k_h * d.k_w;
    for (int64_t co = 0; co < d.c_out; ++co) {
        for (int64_t ci = 0; ci < d.c_in; ++ci) {
            float* dkk = dk + (co * d.c_in + ci) * ksz;
            for (int64_t kh = 0; kh < d.k_h; ++kh) {
                for (int64_t kw = 0; kw < d.k_w; ++kw) {
                    const int64_t ki = kh * d.k_w + kw;
                    if (mask && mask[ki] == 0.0f) {
                        if (!accumulate) {
                            dkk[ki] = 0.0f;
                        }
                        continue;
                    }
                    float acc = accumulate ? dkk[ki] : 0.0f;
                    for (int64_t b = 0; b < d.batch; ++b) {
                        const float* xplane = x + (b * d.c_in + ci) * plane;
                        const float* dyplane = dy + (b * d.c_out + co) * plane;
                        for (int64_t oh = 0; oh < d.height; ++oh) {
                            const int64_t ih = oh - d.pad_h + kh;
                            if (ih < 0 || ih >= d.height) {
                                continue;
                            }
                            for (int64_t ow = 0; ow < d.width; ++ow) {
                                const int64_t iw = ow - d.pad_w + kw;
                                if (iw < 0 || iw >= d.width) {
                                    continue;
                                }
                                acc += xplane[ih * d.width + iw] * dyplane[oh * d.width + ow];
                            }
                        }
                    }
                    dkk[ki] = acc;
                }
            }
        }
    }
}

void bn2d_stats(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w, float* mean,
                float* var) {
    const int64_t plane = h * w;
    const double inv_m = 1.0 / static_cast<double>(batch * plane);
    for (int64_t c = 0; c < ch; ++c) {
        double sum = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            const float* p = x + (b * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                sum += p[i];
            }
        }
        const double mu = sum * inv_m;
        double sq = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            const float* p = x + (b * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const double dcen = p[i] - mu;
                sq += dcen * dcen;
            }
        }
        mean[c] = static_cast<float>(mu);
        var[c] = static_cast<float>(sq * inv_m);
    }
}

void bn2d_forward(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w,
                  const float* mean, const float* invstd, const float* gamma, const float* beta,
                  float* y, float* xhat) {
    const int64_t plane = h * w;
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            const int64_t base = (b * ch + c) * plane;
            const float mu = mean[c];
            const float is = invstd[c];
            const float g = gamma[c];
            const float be = beta[c];
            for (int64_t i = 0; i < plane; ++i) {
                const float xn = (x[base + i] - mu) * is;
                if (xhat) {
                    xhat[base + i] = xn;
                }
                y[base + i] = xn * g + be;
            }
        }
    }
}

void bn2d_backward(const float* dy, const float* xhat, int64_t batch, int64_t ch, int64_t h,
                   int64_t w, const float* gamma, const float* invstd, bool batch_stats,
                   float* dx, float* dgamma, float* dbeta) {
    const int64_t plane = h * w;
    const double m = static_cast<double>(batch * plane);
    for (int64_t c = 0; c < ch; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            const int64_t base = (b * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const double g = dy[base + i];
                sum_dy += g;
                sum_dy_xhat += g * xhat[base + i];
            }
        }
        if (dbeta) {
            dbeta[c] = static_cast<float>(sum_dy);
        }
        if (dgamma) {
            dgamma[c] = static_cast<float>(sum_dy_xhat);
        }
        if (dx) {
            const double g = gamma[c];
            const double is = invstd[c];
            for (int64_t b = 0; b < batch; ++b) {
                const int64_t base = (b * ch + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double dyv = dy[base + i];
                    double v;
                    if (batch_stats) {
                        v = (g * is / m) * (m * dyv - sum_dy - xhat[base + i] * sum_dy_xhat);
                    } else {
                        v = g * is * dyv;
                    }
                    dx[base + i] = static_cast<float>(v);
                }
            }
        }
    }
}

} // namespace mmcap::kernels::serial

#pragma once

#include <cstdint>

// Low-level compute kernels. Every kernel exists twice: a plain serial
// reference in kernels::serial and an OpenMP version in kernels::parallel.
// Both compute each output element with the same inner summation order, so
// results are bitwise identical regardless of backend or thread count; the
// unit tests assert this and the mmcap_bench tool compares their speed.
//
// The dispatching functions at namespace scope route to the active backend.

namespace mmcap::kernels {

enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);

// Caps OpenMP worker threads; values < 1 are ignored.
void set_max_threads(int n);

struct Conv2dDims {
    int64_t batch = 0;
    int64_t c_in = 0;
    int64_t height = 0;
    int64_t width = 0;
    int64_t c_out = 0;
    int64_t k_h = 0;
    int64_t k_w = 0;
    int64_t pad_h = 0;
    int64_t pad_w = 0;
};

// c[M x N] = a[M x K] * b[K x N]   (+= when accumulate)
// c[M x N] = a[M x K] * b[N x K]^T
// c[M x N] = a[K x M]^T * b[K x N]
#define MMCAP_DECLARE_KERNELS                                                                   \
    void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,     \
                 bool accumulate);                                                              \
    void gemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,     \
                 bool accumulate);                                                              \
    void gemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,     \
                 bool accumulate);                                                              \
    /* Same-size cross-correlation with zero padding; mask (k_h*k_w, nullable) skips taps. */   \
    void conv2d_forward(const float* x, const float* kern, const float* mask, float* y,         \
                        const Conv2dDims& d);                                                   \
    /* Gather form: each dx element sums its contributions in a fixed order. */                 \
    void conv2d_backward_input(const float* dy, const float* kern, const float* mask,           \
                               float* dx, const Conv2dDims& d, bool accumulate);                \
    void conv2d_backward_kernel(const float* x, const float* dy, const float* mask, float* dk,  \
                                const Conv2dDims& d, bool accumulate);                          \
    /* Per-channel biased mean/variance over (batch, height, width). */                         \
    void bn2d_stats(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w,            \
                    float* mean, float* var);                                                   \
    /* y = gamma * (x - mean) * invstd + beta; xhat (nullable) keeps the normalized value. */   \
    void bn2d_forward(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w,          \
                      const float* mean, const float* invstd, const float* gamma,               \
                      const float* beta, float* y, float* xhat);                                \
    void bn2d_backward(const float* dy, const float* xhat, int64_t batch, int64_t ch,           \
                       int64_t h, int64_t w, const float* gamma, const float* invstd,           \
                       bool batch_stats, float* dx, float* dgamma, float* dbeta)

namespace serial {
MMCAP_DECLARE_KERNELS;
}

namespace parallel {
MMCAP_DECLARE_KERNELS;
}

MMCAP_DECLARE_KERNELS;

#undef MMCAP_DECLARE_KERNELS

} // namespace mmcap::kernels

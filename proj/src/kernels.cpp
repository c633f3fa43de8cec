#include "mmcap/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmcap::kernels {

namespace {
Backend g_backend = Backend::Parallel;
}

Backend backend() { return g_backend; }

void set_backend(Backend b) { g_backend = b; }

void set_max_threads(int n) {
#ifdef _OPENMP
    if (n >= 1 && n < omp_get_max_threads()) {
        omp_set_num_threads(n);
    }
#else
    (void)n;
#endif
}

#define MMCAP_DISPATCH(fn, ...)                  \
    if (g_backend == Backend::Serial) {          \
        serial::fn(__VA_ARGS__);                 \
    } else {                                     \
        parallel::fn(__VA_ARGS__);               \
    }

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    MMCAP_DISPATCH(gemm_nn, a, b, c, m, k, n, accumulate)
}

void gemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    MMCAP_DISPATCH(gemm_nt, a, b, c, m, k, n, accumulate)
}

void gemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    MMCAP_DISPATCH(gemm_tn, a, b, c, m, k, n, accumulate)
}

void conv2d_forward(const float* x, const float* kern, const float* mask, float* y,
                    const Conv2dDims& d) {
    MMCAP_DISPATCH(conv2d_forward, x, kern, mask, y, d)
}

void conv2d_backward_input(const float* dy, const float* kern, const float* mask, float* dx,
                           const Conv2dDims& d, bool accumulate) {
    MMCAP_DISPATCH(conv2d_backward_input, dy, kern, mask, dx, d, accumulate)
}

void conv2d_backward_kernel(const float* x, const float* dy, const float* mask, float* dk,
                            const Conv2dDims& d, bool accumulate) {
    MMCAP_DISPATCH(conv2d_backward_kernel, x, dy, mask, dk, d, accumulate)
}

void bn2d_stats(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w, float* mean,
                float* var) {
    MMCAP_DISPATCH(bn2d_stats, x, batch, ch, h, w, mean, var)
}

void bn2d_forward(const float* x, int64_t batch, int64_t ch, int64_t h, int64_t w,
                  const float* mean, const float* invstd, const float* gamma, const float* beta,
                  float* y, float* xhat) {
    MMCAP_DISPATCH(bn2d_forward, x, batch, ch, h, w, mean, invstd, gamma, beta, y, xhat)
}

void bn2d_backward(const float* dy, const float* xhat, int64_t batch, int64_t ch, int64_t h,
                   int64_t w, const float* gamma, const float* invstd, bool batch_stats,
                   float* dx, float* dgamma, float* dbeta) {
    MMCAP_DISPATCH(bn2d_backward, dy, xhat, batch, ch, h, w, gamma, invstd, batch_stats, dx,
                   dgamma, dbeta)
}

#undef MMCAP_DISPATCH

} // namespace mmcap::kernels

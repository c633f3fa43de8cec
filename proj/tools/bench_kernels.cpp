// Compares the serial reference kernels against the OpenMP kernels on
// model-shaped workloads and verifies that both produce identical bytes.

#include "mmcap/kernels.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> random_buffer(size_t n, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (float& x : v) {
        x = dist(rng);
    }
    return v;
}

double time_ms(const std::function<void()>& fn, int repeats) {
    fn(); // warm up
    const auto start = Clock::now();
    for (int i = 0; i < repeats; ++i) {
        fn();
    }
    const auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                identical ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without openmp; both backends run serial code\n");
#endif
    const int repeats = 5;

    {
        const int64_t m = 256, k = 512, n = 256;
        auto a = random_buffer(static_cast<size_t>(m * k), 1);
        auto b = random_buffer(static_cast<size_t>(k * n), 2);
        std::vector<float> c_serial(static_cast<size_t>(m * n));
        std::vector<float> c_parallel(c_serial.size());
        const double t_serial = time_ms(
            [&] { mmcap::kernels::serial::gemm_nn(a.data(), b.data(), c_serial.data(), m, k, n, false); },
            repeats);
        const double t_parallel = time_ms(
            [&] { mmcap::kernels::parallel::gemm_nn(a.data(), b.data(), c_parallel.data(), m, k, n, false); },
            repeats);
        report("gemm_nn 256x512x256", t_serial, t_parallel,
               std::memcmp(c_serial.data(), c_parallel.data(), c_serial.size() * 4) == 0);
    }

    {
        mmcap::kernels::Conv2dDims d;
        d.batch = 8;
        d.c_in = 32;
        d.c_out = 64;
        d.height = 12;
        d.width = 20;
        d.k_h = 3;
        d.k_w = 3;
        d.pad_h = 1;
        d.pad_w = 1;
        const float mask[9] = {1, 1, 1, 1, 1, 1, 0, 0, 0};
        auto x = random_buffer(static_cast<size_t>(d.batch * d.c_in * d.height * d.width), 3);
        auto kern = random_buffer(static_cast<size_t>(d.c_out * d.c_in * 9), 4);
        std::vector<float> y_serial(static_cast<size_t>(d.batch * d.c_out * d.height * d.width));
        std::vector<float> y_parallel(y_serial.size());
        const double t_serial = time_ms(
            [&] { mmcap::kernels::serial::conv2d_forward(x.data(), kern.data(), mask, y_serial.data(), d); },
            repeats);
        const double t_parallel = time_ms(
            [&] { mmcap::kernels::parallel::conv2d_forward(x.data(), kern.data(), mask, y_parallel.data(), d); },
            repeats);
        report("conv2d fwd 8x32->64 12x20", t_serial, t_parallel,
               std::memcmp(y_serial.data(), y_parallel.data(), y_serial.size() * 4) == 0);

        std::vector<float> dk_serial(kern.size());
        std::vector<float> dk_parallel(kern.size());
        const double g_serial = time_ms(
            [&] {
                mmcap::kernels::serial::conv2d_backward_kernel(x.data(), y_serial.data(), mask,
                                                               dk_serial.data(), d, false);
            },
            repeats);
        const double g_parallel = time_ms(
            [&] {
                mmcap::kernels::parallel::conv2d_backward_kernel(x.data(), y_parallel.data(), mask,
                                                                 dk_parallel.data(), d, false);
            },
            repeats);
        report("conv2d dkernel", g_serial, g_parallel,
               std::memcmp(dk_serial.data(), dk_parallel.data(), dk_serial.size() * 4) == 0);
    }

    {
        const int64_t b = 16, c = 128, h = 12, w = 20;
        auto x = random_buffer(static_cast<size_t>(b * c * h * w), 5);
        std::vector<float> mean_serial(static_cast<size_t>(c));
        std::vector<float> var_serial(static_cast<size_t>(c));
        std::vector<float> mean_parallel(static_cast<size_t>(c));
        std::vector<float> var_parallel(static_cast<size_t>(c));
        const double t_serial = time_ms(
            [&] { mmcap::kernels::serial::bn2d_stats(x.data(), b, c, h, w, mean_serial.data(), var_serial.data()); },
            repeats);
        const double t_parallel = time_ms(
            [&] { mmcap::kernels::parallel::bn2d_stats(x.data(), b, c, h, w, mean_parallel.data(), var_parallel.data()); },
            repeats);
        report("bn2d stats 16x128x12x20", t_serial, t_parallel,
               std::memcmp(mean_serial.data(), mean_parallel.data(), mean_serial.size() * 4) == 0 &&
                   std::memcmp(var_serial.data(), var_parallel.data(), var_serial.size() * 4) == 0);
    }

    return 0;
}

// Compares the serial reference kernels against the OpenMP variants on
// training-shaped workloads and verifies that both produce identical bytes.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "biasguard/kernels.hpp"
#include "biasguard/rng.hpp"

using namespace biasguard;

namespace {

using Clock = std::chrono::steady_clock;

double time_of(int reps, const std::function<void()>& fn) {
    fn();  // warm up
    const auto start = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

bool same_bytes(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_ms, double parallel_ms, bool match) {
    std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                match ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::atoi(argv[1]);

    RandomStream rng(42);

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel variants fall back to serial\n\n");
#endif

    {
        const std::size_t m = 384, k = 256, n = 320;
        std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        const double ts = time_of(reps, [&] {
            kernels::serial::matmul(a.data(), b.data(), c1.data(), m, k, n);
        });
        const double tp = time_of(reps, [&] {
            kernels::parallel::matmul(a.data(), b.data(), c2.data(), m, k, n);
        });
        report("matmul 384x256x320", ts, tp, same_bytes(c1, c2));
    }
    {
        const std::size_t n = 256, k = 64;
        std::vector<double> a(n * k), b(n * k), m(k * k);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        for (auto& v : m) v = rng.normal();
        double r1 = 0, r2 = 0;
        const double ts = time_of(reps, [&] {
            r1 = kernels::serial::pair_quadform_sum(a.data(), b.data(), m.data(), n, k);
        });
        const double tp = time_of(reps, [&] {
            r2 = kernels::parallel::pair_quadform_sum(a.data(), b.data(), m.data(), n, k);
        });
        report("pair_quadform 256x64", ts, tp,
               std::memcmp(&r1, &r2, sizeof(double)) == 0);
    }
    {
        const std::size_t na = 512, nb = 128, k = 48;
        std::vector<double> a(na * k), b(nb * k), m(k * k), g1(na * nb), g2(na * nb);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        for (auto& v : m) v = rng.normal();
        const double ts = time_of(reps, [&] {
            kernels::serial::pair_quadform_grid(a.data(), na, b.data(), nb, m.data(), k,
                                                g1.data());
        });
        const double tp = time_of(reps, [&] {
            kernels::parallel::pair_quadform_grid(a.data(), na, b.data(), nb, m.data(), k,
                                                  g2.data());
        });
        report("quadform_grid 512x128", ts, tp, same_bytes(g1, g2));
    }
    {
        const std::size_t rows = 4096, cols = 96;
        std::vector<double> x(rows * cols), c1(cols * cols), c2(cols * cols);
        for (auto& v : x) v = rng.normal();
        const double ts = time_of(reps, [&] {
            kernels::serial::covariance(x.data(), rows, cols, c1.data());
        });
        const double tp = time_of(reps, [&] {
            kernels::parallel::covariance(x.data(), rows, cols, c2.data());
        });
        report("covariance 4096x96", ts, tp, same_bytes(c1, c2));
    }
    {
        const std::size_t n = 1 << 22;
        std::vector<double> x(n), y1(n), y2(n);
        for (auto& v : x) v = rng.normal();
        auto f = [](double v) { return v > 0.0 ? v : 0.0; };
        const double ts =
            time_of(reps, [&] { kernels::serial::map_unary(x.data(), y1.data(), n, f); });
        const double tp =
            time_of(reps, [&] { kernels::parallel::map_unary(x.data(), y2.data(), n, f); });
        report("relu map 4M", ts, tp, same_bytes(y1, y2));
    }
    return 0;
}

#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace biasguard::kernels {

// Work threshold (in flops) below which the dispatching wrappers stay on the
// serial path. Parallel and serial variants compute every output element with
// the same per-element operation order, so results are bitwise identical
// regardless of which path runs or how many threads execute it.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

inline bool openmp_enabled() {
#ifdef _OPENMP
    return omp_get_max_threads() > 1;
#else
    return false;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------
namespace serial {

// c[m x n] = a[m x k] * b[k x n]; c is overwritten.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// out[j] = sum_i x[i*cols + j]
void colsum(const double* x, double* out, std::size_t rows, std::size_t cols);

// out[i] = sum_j x[i*cols + j]
void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols);

// Sample covariance of the rows of x: c[cols x cols], divisor rows-1.
// Exactly symmetric by construction.
void covariance(const double* x, std::size_t rows, std::size_t cols, double* c);

// sum over ordered pairs i != j of (a_i - b_j)^T m (a_i - b_j); a, b are
// n x k row matrices, m is k x k.
double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k);

// out[i*nb + j] = (a_i - b_j)^T m (a_i - b_j) for all pairs.
void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out);

// out[i] = d_i^T m d_i for each row d_i of d[n x k].
void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k);

template <class F>
void map_unary(const double* x, double* y, std::size_t n, F f) {
    for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void zip_binary(const double* a, const double* b, double* y, std::size_t n, F f) {
    for (std::size_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP variants. Each parallel loop ranges over disjoint output elements;
// per-element accumulation order matches the serial reference.
// ---------------------------------------------------------------------------
namespace parallel {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void colsum(const double* x, double* out, std::size_t rows, std::size_t cols);
void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols);
void covariance(const double* x, std::size_t rows, std::size_t cols, double* c);
double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k);
void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out);
void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k);

template <class F>
void map_unary(const double* x, double* y, std::size_t n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        y[i] = f(x[i]);
}

template <class F>
void zip_binary(const double* a, const double* b, double* y, std::size_t n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        y[i] = f(a[i], b[i]);
}

}  // namespace parallel

// ---------------------------------------------------------------------------
// Dispatching wrappers used by the rest of the codebase.
// ---------------------------------------------------------------------------

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void colsum(const double* x, double* out, std::size_t rows, std::size_t cols);
void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols);
void covariance(const double* x, std::size_t rows, std::size_t cols, double* c);
double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k);
void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out);
void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k);

// Full reduction; kept serial so the summation order never depends on the
// thread count.
double sum_all(const double* x, std::size_t n);

template <class F>
void map_unary(const double* x, double* y, std::size_t n, F f) {
    parallel::map_unary(x, y, n, f);
}

template <class F>
void zip_binary(const double* a, const double* b, double* y, std::size_t n, F f) {
    parallel::zip_binary(a, b, y, n, f);
}

}  // namespace biasguard::kernels

#include "biasguard/kernels.hpp"

#include <vector>

namespace biasguard::kernels {

namespace serial {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void colsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += x[i * cols + j];
        out[j] = acc;
    }
}

void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = x + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j];
        out[i] = acc;
    }
}

void covariance(const double* x, std::size_t rows, std::size_t cols, double* c) {
    std::vector<double> mean(cols);
    colsum(x, mean.data(), rows, cols);
    for (std::size_t j = 0; j < cols; ++j) mean[j] /= static_cast<double>(rows);
    const double inv = 1.0 / static_cast<double>(rows - 1);
    for (std::size_t p = 0; p < cols; ++p) {
        for (std::size_t q = p; q < cols; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i)
                acc += (x[i * cols + p] - mean[p]) * (x[i * cols + q] - mean[q]);
            const double v = acc * inv;
            c[p * cols + q] = v;
            c[q * cols + p] = v;
        }
    }
}

namespace {

inline double quadform_diff(const double* ai, const double* bj, const double* m,
                            std::size_t k, double* diff) {
    for (std::size_t t = 0; t < k; ++t) diff[t] = ai[t] - bj[t];
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        double inner = 0.0;
        const double* mrow = m + p * k;
        for (std::size_t q = 0; q < k; ++q) inner += mrow[q] * diff[q];
        acc += diff[p] * inner;
    }
    return acc;
}

}  // namespace

double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k) {
    std::vector<double> partial(n);
    std::vector<double> diff(k);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            acc += quadform_diff(a + i * k, b + j * k, m, k, diff.data());
        }
        partial[i] = acc;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += partial[i];
    return total;
}

void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out) {
    std::vector<double> diff(k);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = quadform_diff(a + i * k, b + j * k, m, k, diff.data());
}

void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = d + i * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            double inner = 0.0;
            const double* mrow = m + p * k;
            for (std::size_t q = 0; q < k; ++q) inner += mrow[q] * row[q];
            acc += row[p] * inner;
        }
        out[i] = acc;
    }
}

}  // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[static_cast<std::size_t>(i) * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void colsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
#endif
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += x[i * cols + static_cast<std::size_t>(j)];
        out[j] = acc;
    }
}

void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
        double acc = 0.0;
        const double* row = x + static_cast<std::size_t>(i) * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j];
        out[i] = acc;
    }
}

void covariance(const double* x, std::size_t rows, std::size_t cols, double* c) {
    std::vector<double> mean(cols);
    serial::colsum(x, mean.data(), rows, cols);
    for (std::size_t j = 0; j < cols; ++j) mean[j] /= static_cast<double>(rows);
    const double inv = 1.0 / static_cast<double>(rows - 1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows * cols * cols >= kParallelThreshold)
#endif
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(cols); ++pp) {
        const std::size_t p = static_cast<std::size_t>(pp);
        for (std::size_t q = p; q < cols; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i)
                acc += (x[i * cols + p] - mean[p]) * (x[i * cols + q] - mean[q]);
            const double v = acc * inv;
            c[p * cols + q] = v;
            c[q * cols + p] = v;
        }
    }
}

double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k) {
    std::vector<double> partial(n);
#ifdef _OPENMP
#pragma omp parallel if (n * n * k >= kParallelThreshold)
    {
        std::vector<double> diff(k);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (static_cast<std::size_t>(i) == j) continue;
                acc += serial::quadform_diff(a + static_cast<std::size_t>(i) * k, b + j * k, m, k,
                                             diff.data());
            }
            partial[i] = acc;
        }
    }
#else
    std::vector<double> diff(k);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            acc += serial::quadform_diff(a + i * k, b + j * k, m, k, diff.data());
        }
        partial[i] = acc;
    }
#endif
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += partial[i];
    return total;
}

void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out) {
#ifdef _OPENMP
#pragma omp parallel if (na * nb * k >= kParallelThreshold)
    {
        std::vector<double> diff(k);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(na); ++i)
            for (std::size_t j = 0; j < nb; ++j)
                out[static_cast<std::size_t>(i) * nb + j] = serial::quadform_diff(
                    a + static_cast<std::size_t>(i) * k, b + j * k, m, k, diff.data());
    }
#else
    serial::pair_quadform_grid(a, na, b, nb, m, k, out);
#endif
}

void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n * k * k >= kParallelThreshold)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double* row = d + static_cast<std::size_t>(i) * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            double inner = 0.0;
            const double* mrow = m + p * k;
            for (std::size_t q = 0; q < k; ++q) inner += mrow[q] * row[q];
            acc += row[p] * inner;
        }
        out[i] = acc;
    }
}

}  // namespace parallel

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    parallel::matmul(a, b, c, m, k, n);
}

void colsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
    parallel::colsum(x, out, rows, cols);
}

void rowsum(const double* x, double* out, std::size_t rows, std::size_t cols) {
    parallel::rowsum(x, out, rows, cols);
}

void covariance(const double* x, std::size_t rows, std::size_t cols, double* c) {
    parallel::covariance(x, rows, cols, c);
}

double pair_quadform_sum(const double* a, const double* b, const double* m,
                         std::size_t n, std::size_t k) {
    return parallel::pair_quadform_sum(a, b, m, n, k);
}

void pair_quadform_grid(const double* a, std::size_t na, const double* b, std::size_t nb,
                        const double* m, std::size_t k, double* out) {
    parallel::pair_quadform_grid(a, na, b, nb, m, k, out);
}

void rowwise_quadform(const double* d, const double* m, double* out,
                      std::size_t n, std::size_t k) {
    parallel::rowwise_quadform(d, m, out, n, k);
}

double sum_all(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

}  // namespace biasguard::kernels

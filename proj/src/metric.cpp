#include "biasguard/metric.hpp"

#include <cmath>
#include <vector>

#include "biasguard/errors.hpp"
#include "biasguard/kernels.hpp"

namespace biasguard {

void sym_eigen(const Tensor& a, Tensor& eigvals, Tensor& eigvecs) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw ContractViolation("sym_eigen: matrix must be square");

    Tensor w = a;                    // working copy, driven to diagonal form
    Tensor v = Tensor::identity(n);  // accumulated rotations

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += w(p, q) * w(p, q);
        if (off <= 1e-30 * static_cast<double>(n * n)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = w(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = w(p, p);
                const double aqq = w(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double wip = w(i, p), wiq = w(i, q);
                    w(i, p) = c * wip - s * wiq;
                    w(i, q) = s * wip + c * wiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double wpi = w(p, i), wqi = w(q, i);
                    w(p, i) = c * wpi - s * wqi;
                    w(q, i) = s * wpi + c * wqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    eigvals = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = w(i, i);
    eigvecs = std::move(v);
}

Tensor batch_covariance(const Tensor& stacked) {
    if (stacked.rows() < 2)
        throw ContractViolation("batch_covariance: needs at least 2 rows");
    const std::size_t k = stacked.cols();
    Tensor c({k, k});
    kernels::covariance(stacked.data().data(), stacked.rows(), k, c.data().data());
    return c;
}

MetricMatrix ridge_pseudo_inverse(const Tensor& c, double eps) {
    if (c.rows() != c.cols())
        throw ContractViolation("ridge_pseudo_inverse: matrix must be square");
    if (eps < 0.0) throw ContractViolation("ridge_pseudo_inverse: eps must be >= 0");
    const std::size_t k = c.rows();
    double max_asym = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            max_asym = std::max(max_asym, std::abs(c(i, j) - c(j, i)));
    if (max_asym > 1e-8)
        throw ContractViolation("ridge_pseudo_inverse: input is not symmetric");

    Tensor ridged = c;
    for (std::size_t i = 0; i < k; ++i) ridged(i, i) += eps;
    // enforce exact symmetry before factorizing
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double v = 0.5 * (ridged(i, j) + ridged(j, i));
            ridged(i, j) = v;
            ridged(j, i) = v;
        }

    Tensor eigvals, eigvecs;
    sym_eigen(ridged, eigvals, eigvecs);

    constexpr double tau = 1e-10;
    Tensor m({k, k});
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                if (eigvals[t] > tau) acc += eigvecs(i, t) * eigvecs(j, t) / eigvals[t];
            }
            m(i, j) = acc;
            m(j, i) = acc;
        }
    }

    MetricMatrix out;
    out.m = std::move(m);
    out.epsilon = eps;
    return out;
}

MetricMatrix identity_metric(std::size_t k) {
    MetricMatrix out;
    out.m = Tensor::identity(k);
    out.epsilon = 0.0;
    return out;
}

double mahalanobis_sq(std::span<const double> x, std::span<const double> y,
                      const MetricMatrix& metric) {
    const std::size_t k = metric.dim();
    if (x.size() != k || y.size() != k)
        throw ContractViolation("mahalanobis_sq: vector dimensions do not match the metric");
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        double inner = 0.0;
        for (std::size_t q = 0; q < k; ++q) inner += metric.m(p, q) * (x[q] - y[q]);
        acc += (x[p] - y[p]) * inner;
    }
    return acc;
}

double mahalanobis_sq(const Tensor& x, const Tensor& y, const MetricMatrix& metric) {
    return mahalanobis_sq(std::span<const double>(x.data()),
                          std::span<const double>(y.data()), metric);
}

CholeskyFactor cholesky_factor(const MetricMatrix& metric) {
    const std::size_t n = metric.dim();
    const double shifts[] = {0.0, 1e-12, 1e-10, 1e-8};
    for (double shift : shifts) {
        Tensor l({n, n});
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = metric.m(i, j) + (i == j ? shift : 0.0);
                for (std::size_t t = 0; t < j; ++t) acc -= l(i, t) * l(j, t);
                if (i == j) {
                    if (acc <= 0.0) {
                        ok = false;
                        break;
                    }
                    l(i, i) = std::sqrt(acc);
                } else {
                    l(i, j) = acc / l(j, j);
                }
            }
        }
        if (ok) return CholeskyFactor{std::move(l), shift};
    }
    throw NumericalFailure("cholesky_factor: factorization failed at shift 1e-8");
}

}  // namespace biasguard

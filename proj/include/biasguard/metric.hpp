#pragma once

#include <cstddef>
#include <span>

#include "biasguard/tensor.hpp"

namespace biasguard {

// Symmetric positive semidefinite metric matrix together with the ridge
// constant used to form it.
struct MetricMatrix {
    Tensor m;                         // k x k
    double epsilon = 0.0;
    std::size_t source_batch_size = 0;  // rows of the projection stack it came from

    std::size_t dim() const { return m.rows(); }
};

struct CholeskyFactor {
    Tensor l;       // lower triangular, l * l^T = m + shift * I
    double shift = 0.0;
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// a = eigvecs * diag(eigvals) * eigvecs^T; eigvecs columns are eigenvectors.
void sym_eigen(const Tensor& a, Tensor& eigvals, Tensor& eigvecs);

// Sample covariance of the rows (divisor rows-1, per-column mean centering).
Tensor batch_covariance(const Tensor& stacked);

// M = [c + eps*I]^+ via symmetric eigendecomposition; eigenvalues above 1e-10
// are inverted, the rest zeroed, so eps = 0 still yields the Moore-Penrose
// generalized inverse.
MetricMatrix ridge_pseudo_inverse(const Tensor& c, double eps);

MetricMatrix identity_metric(std::size_t k);

// (x - y)^T m (x - y)
double mahalanobis_sq(std::span<const double> x, std::span<const double> y,
                      const MetricMatrix& metric);
double mahalanobis_sq(const Tensor& x, const Tensor& y, const MetricMatrix& metric);

// Lower-triangular factor of m + delta*I; delta walks {0, 1e-12, 1e-10, 1e-8}
// until the factorization succeeds.
CholeskyFactor cholesky_factor(const MetricMatrix& metric);

}  // namespace biasguard

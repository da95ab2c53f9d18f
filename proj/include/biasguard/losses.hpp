#pragma once

#include <functional>

#include "biasguard/metric.hpp"
#include "biasguard/tape.hpp"

namespace biasguard {

struct LossWeights {
    double lambda_vae = 1.0;
    double lambda_mse = 1.0;
    double lambda_m = 1.0;
    double lambda_gp = 10.0;
    int n_critic = 5;
};

struct LossBreakdown {
    double l_wgan = 0.0;
    double l_vae = 0.0;
    double l_mse = 0.0;
    double l_m = 0.0;
    double total = 0.0;
};

// Argument of the log in the metric loss is clamped here before taking it.
inline constexpr double kMetricLogFloor = 1e-8;

// -------- tape builders (training path) --------

// Gaussian KL against the standard normal prior plus 0.5 * squared
// reconstruction error, averaged over the batch rows.
NodeId vae_loss_node(Tape& t, NodeId mu, NodeId logvar, NodeId x, NodeId x_rec);

NodeId mse_loss_node(Tape& t, NodeId x, NodeId x_rec);

struct WganLossNodes {
    NodeId critic_loss;
    NodeId generator_loss;
};
WganLossNodes wgan_losses_node(Tape& t, NodeId critic_real, NodeId critic_fake, NodeId gp,
                               double lambda_gp);

// critic builds the scalar-per-row critic output for a given input node; the
// penalty differentiates through it, so the returned node carries second-order
// structure for the critic parameters.
using CriticFn = std::function<NodeId(Tape&, NodeId)>;
NodeId gradient_penalty_node(Tape& t, const CriticFn& critic, NodeId x, NodeId x_fake,
                             NodeId alpha);

// -log(max(sum_{i!=j} d2(X_i,Y_j) - d2(X_i,X_j), floor)) with distances taken
// under the metric node (pass a Constant node to stop gradients through M).
NodeId mahalanobis_loss_node(Tape& t, NodeId x_proj, NodeId y_proj, NodeId metric);

// -------- plain evaluators (reporting, tests) --------

double vae_loss(const Tensor& mu, const Tensor& logvar, const Tensor& x, const Tensor& x_rec);
double mse_loss(const Tensor& x, const Tensor& x_rec);

struct WganLosses {
    double critic_loss;
    double generator_loss;
};
WganLosses wgan_losses(const Tensor& critic_real, const Tensor& critic_fake, double gp,
                       double lambda_gp);

double mahalanobis_loss(const Tensor& x_proj, const Tensor& y_proj, const MetricMatrix& metric);

LossBreakdown total_loss(double l_wgan, double l_vae, double l_mse, double l_m,
                         const LossWeights& weights);

}  // namespace biasguard

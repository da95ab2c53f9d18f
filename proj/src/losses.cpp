#include "biasguard/losses.hpp"

#include <cmath>

#include "biasguard/errors.hpp"
#include "biasguard/kernels.hpp"

namespace biasguard {

NodeId vae_loss_node(Tape& t, NodeId mu, NodeId logvar, NodeId x, NodeId x_rec) {
    const double inv_n = 1.0 / static_cast<double>(t.value(mu).rows());
    // KL(q || N(0,I)) = 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
    NodeId kl_terms = t.add(t.add(t.mul(mu, mu), t.exp(logvar)), t.affine(logvar, -1.0, -1.0));
    NodeId kl = t.affine(t.sum(kl_terms), 0.5 * inv_n, 0.0);
    NodeId d = t.sub(x, x_rec);
    NodeId rec = t.affine(t.sum(t.mul(d, d)), 0.5 * inv_n, 0.0);
    return t.add(kl, rec);
}

NodeId mse_loss_node(Tape& t, NodeId x, NodeId x_rec) {
    NodeId d = t.sub(x, x_rec);
    return t.mean(t.mul(d, d));
}

WganLossNodes wgan_losses_node(Tape& t, NodeId critic_real, NodeId critic_fake, NodeId gp,
                               double lambda_gp) {
    NodeId fake_mean = t.mean(critic_fake);
    NodeId real_mean = t.mean(critic_real);
    NodeId critic_loss = t.add(t.sub(fake_mean, real_mean), t.affine(gp, lambda_gp, 0.0));
    NodeId generator_loss = t.affine(fake_mean, -1.0, 0.0);
    return {critic_loss, generator_loss};
}

NodeId gradient_penalty_node(Tape& t, const CriticFn& critic, NodeId x, NodeId x_fake,
                             NodeId alpha) {
    if (t.value(alpha).numel() != t.value(x).rows())
        throw ContractViolation("gradient_penalty: one interpolation factor per batch row");
    NodeId one_minus = t.affine(alpha, -1.0, 1.0);
    NodeId x_hat = t.add(t.row_scale(x, alpha), t.row_scale(x_fake, one_minus));
    NodeId critic_out = critic(t, x_hat);
    // rows are independent, so the gradient of the summed critic w.r.t. x_hat
    // holds each row's own gradient
    NodeId critic_sum = t.sum(critic_out);
    NodeId wrt[] = {x_hat};
    NodeId g = t.grad(critic_sum, wrt)[0];
    // tiny shift keeps the norm differentiable when a gradient row vanishes
    NodeId norms = t.sqrt(t.affine(t.rowsum(t.mul(g, g)), 1.0, 1e-24));
    NodeId excess = t.affine(norms, 1.0, -1.0);
    return t.mean(t.mul(excess, excess));
}

NodeId mahalanobis_loss_node(Tape& t, NodeId x_proj, NodeId y_proj, NodeId metric) {
    if (t.value(x_proj).rows() < 2)
        throw ContractViolation("mahalanobis_loss: needs at least 2 samples per branch");
    NodeId cross = t.pair_quadform(x_proj, y_proj, metric);
    NodeId within = t.pair_quadform(x_proj, x_proj, metric);
    NodeId margin = t.clamp_min(t.sub(cross, within), kMetricLogFloor);
    return t.affine(t.log(margin), -1.0, 0.0);
}

// -------- plain evaluators --------

namespace {

// Evaluating through a throwaway tape keeps these numerically identical to
// the training path.
double scalar_eval(const std::function<NodeId(Tape&)>& build) {
    Tape t;
    return t.scalar_value(build(t));
}

}  // namespace

double vae_loss(const Tensor& mu, const Tensor& logvar, const Tensor& x, const Tensor& x_rec) {
    return scalar_eval([&](Tape& t) {
        return vae_loss_node(t, t.constant(mu), t.constant(logvar), t.constant(x),
                             t.constant(x_rec));
    });
}

double mse_loss(const Tensor& x, const Tensor& x_rec) {
    return scalar_eval(
        [&](Tape& t) { return mse_loss_node(t, t.constant(x), t.constant(x_rec)); });
}

WganLosses wgan_losses(const Tensor& critic_real, const Tensor& critic_fake, double gp,
                       double lambda_gp) {
    Tape t;
    WganLossNodes nodes = wgan_losses_node(t, t.constant(critic_real), t.constant(critic_fake),
                                           t.constant(Tensor::scalar(gp)), lambda_gp);
    return {t.scalar_value(nodes.critic_loss), t.scalar_value(nodes.generator_loss)};
}

double mahalanobis_loss(const Tensor& x_proj, const Tensor& y_proj, const MetricMatrix& metric) {
    return scalar_eval([&](Tape& t) {
        return mahalanobis_loss_node(t, t.constant(x_proj), t.constant(y_proj),
                                     t.constant(metric.m));
    });
}

LossBreakdown total_loss(double l_wgan, double l_vae, double l_mse, double l_m,
                         const LossWeights& weights) {
    LossBreakdown b;
    b.l_wgan = l_wgan;
    b.l_vae = l_vae;
    b.l_mse = l_mse;
    b.l_m = l_m;
    b.total = l_wgan + weights.lambda_vae * l_vae + weights.lambda_mse * l_mse +
              weights.lambda_m * l_m;
    return b;
}

}  // namespace biasguard

#include "biasguard/adam.hpp"

#include <cmath>

#include "biasguard/errors.hpp"

namespace biasguard {

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t t,
               const AdamConfig& config) {
    if (param.numel() != grad.numel() || param.numel() != m.numel() ||
        param.numel() != v.numel())
        throw ContractViolation("adam_step: parameter/gradient/moment shapes disagree");
    const double b1 = config.beta1, b2 = config.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        param[i] -= config.lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
}

void AdamOptimizer::step(std::map<std::string, Tensor>& params,
                         const std::map<std::string, Tensor>& grads) {
    ++step_;
    for (const auto& [name, grad] : grads) {
        auto it = params.find(name);
        if (it == params.end())
            throw ContractViolation("AdamOptimizer: gradient for unknown parameter " + name);
        Tensor& param = it->second;
        if (!param.same_shape(grad))
            throw ContractViolation("AdamOptimizer: gradient shape mismatch for " + name);
        auto slot = slots_.find(name);
        if (slot == slots_.end()) {
            slot = slots_.emplace(name, Slot{Tensor::zeros(param.shape()),
                                             Tensor::zeros(param.shape())}).first;
        }
        adam_step(param, grad, slot->second.m, slot->second.v, step_, config_);
    }
}

}  // namespace biasguard

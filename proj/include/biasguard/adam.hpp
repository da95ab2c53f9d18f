#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "biasguard/tensor.hpp"

namespace biasguard {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam over a named parameter group. Moment slots are created
// lazily and keyed by parameter name; the step counter advances once per
// step() call.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::uint64_t step_count() const { return step_; }

    // Applies one update to every parameter that has a gradient entry.
    void step(std::map<std::string, Tensor>& params,
              const std::map<std::string, Tensor>& grads);

    const Tensor& first_moment(const std::string& name) const { return slots_.at(name).m; }
    const Tensor& second_moment(const std::string& name) const { return slots_.at(name).v; }

private:
    struct Slot {
        Tensor m, v;
    };

    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::map<std::string, Slot> slots_;
};

// Single-tensor Adam update, t is the 1-based step index.
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t t,
               const AdamConfig& config);

}  // namespace biasguard

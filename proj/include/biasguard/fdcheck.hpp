#pragma once

#include <functional>
#include <vector>

#include "biasguard/tape.hpp"

namespace biasguard {

// Builds a scalar loss from freshly staged leaves. The builder receives the
// tape and one Input node per entry of the tensor list, in order.
using LossBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

// Compares analytic gradients against central finite differences with spacing
// h, over every coordinate of every input. Returns the maximum of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_difference_check(const LossBuilder& build, const std::vector<Tensor>& inputs,
                               double h);

}  // namespace biasguard

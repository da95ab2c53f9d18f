#include "biasguard/fdcheck.hpp"

#include <algorithm>
#include <cmath>

#include "biasguard/errors.hpp"

namespace biasguard {

double finite_difference_check(const LossBuilder& build, const std::vector<Tensor>& inputs,
                               double h) {
    if (h <= 0.0) throw ContractViolation("finite_difference_check: h must be positive");

    Tape tape;
    std::vector<NodeId> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.input(t));
    NodeId loss = build(tape, leaves);
    GradientResult analytic = evaluate_with_gradients(tape, loss, leaves);

    double max_rel = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor work = inputs[li];
        for (std::size_t c = 0; c < work.numel(); ++c) {
            const double saved = work[c];
            work[c] = saved + h;
            tape.set_leaf(leaves[li], work);
            tape.replay();
            const double f_plus = tape.scalar_value(loss);
            work[c] = saved - h;
            tape.set_leaf(leaves[li], work);
            tape.replay();
            const double f_minus = tape.scalar_value(loss);
            work[c] = saved;
            tape.set_leaf(leaves[li], work);

            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic.gradients[li][c];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    tape.replay();  // restore values at the unperturbed point
    return max_rel;
}

}  // namespace biasguard

#pragma once

#include <stda/param_set.hpp>

#include <cstdint>

namespace stda {

enum class OptimizerKind { GradientDescent, AdaptiveMoment };

/// Optimizer configuration plus its moment buffers, keyed by parameter name
/// through a ParamSet of matching layout.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::AdaptiveMoment;
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    ParamSet first_moment;
    ParamSet second_moment;
};

OptimizerState make_adam(double step_size);
OptimizerState make_gradient_descent(double step_size);

/// p <- p - lr * grad(p) for every entry. Gradients are left untouched.
void sgd_step(ParamSet& params, double lr);

/// One bias-corrected adaptive-moment update. Moment buffers are created on
/// the first call; afterwards their layout must match `params`.
void adam_step(ParamSet& params, OptimizerState& state);

/// Dispatches on state.kind.
void optimizer_step(ParamSet& params, OptimizerState& state);

} // namespace stda

#include <stda/errors.hpp>
#include <stda/optim.hpp>

#include <cmath>

namespace stda {

OptimizerState make_adam(double step_size)
{
    if (!(step_size > 0.0))
        throw ContractError("make_adam: step size must be positive");
    OptimizerState s;
    s.kind = OptimizerKind::AdaptiveMoment;
    s.step_size = step_size;
    return s;
}

OptimizerState make_gradient_descent(double step_size)
{
    if (!(step_size > 0.0))
        throw ContractError("make_gradient_descent: step size must be positive");
    OptimizerState s;
    s.kind = OptimizerKind::GradientDescent;
    s.step_size = step_size;
    return s;
}

void sgd_step(ParamSet& params, double lr)
{
    if (lr < 0.0)
        throw ContractError("sgd_step: negative learning rate");
    for (auto& e : params) {
        if (e.grad.empty() || !e.grad.same_shape(e.value))
            throw ContractError("sgd_step: missing gradient for '" + e.name + "'");
    }
    for (auto& e : params) {
        auto p = e.value.data();
        auto g = e.grad.data();
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] -= lr * g[i];
    }
}

void adam_step(ParamSet& params, OptimizerState& state)
{
    if (state.kind != OptimizerKind::AdaptiveMoment)
        throw ContractError("adam_step: optimizer state is not adaptive-moment");
    if (!params.grads_ready())
        throw ContractError("adam_step: gradients not populated");
    if (state.step == 0 && state.first_moment.empty()) {
        for (const auto& e : params) {
            state.first_moment.add(e.name, DenseArray(e.value.shape(), 0.0));
            state.second_moment.add(e.name, DenseArray(e.value.shape(), 0.0));
        }
    }
    if (!state.first_moment.same_layout(params) || !state.second_moment.same_layout(params))
        throw ContractError("adam_step: moment buffers do not match parameter layout");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params.entries()[k].value.data();
        auto g = params.entries()[k].grad.data();
        auto m = state.first_moment.entries()[k].value.data();
        auto v = state.second_moment.entries()[k].value.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= state.step_size * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void optimizer_step(ParamSet& params, OptimizerState& state)
{
    if (state.kind == OptimizerKind::GradientDescent) {
        sgd_step(params, state.step_size);
        ++state.step;
    } else {
        adam_step(params, state);
    }
}

} // namespace stda

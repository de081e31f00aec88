#include <stda/errors.hpp>
#include <stda/maml.hpp>
#include <stda/optim.hpp>

#include <cmath>

namespace stda {

std::vector<double> flat_gradient(const ParamSet& at, const Objective& loss, double* value)
{
    ParamSet work = clone_params(at);
    work.zero_grad();
    const double v = forward_and_grad(work, loss);
    if (value)
        *value = v;
    return work.flat_grads();
}

ParamSet inner_adapt(const ParamSet& theta, const Objective& support_loss, double alpha, int steps)
{
    if (steps < 0)
        throw ContractError("inner_adapt: negative step count");
    if (alpha < 0.0)
        throw ContractError("inner_adapt: negative learning rate");
    ParamSet fast = clone_params(theta);
    for (int s = 0; s < steps; ++s) {
        fast.zero_grad();
        forward_and_grad(fast, support_loss);
        sgd_step(fast, alpha);
    }
    return fast;
}

std::vector<double> hessian_vector_product(const ParamSet& at, const Objective& loss, std::span<const double> v)
{
    double norm = 0.0;
    for (double x : v)
        norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> out(v.size(), 0.0);
    if (norm == 0.0)
        return out;
    const double eps = 1e-5 / norm;
    const auto base = at.flat_values();
    std::vector<double> shifted(base.size());
    ParamSet probe = clone_params(at);

    for (std::size_t i = 0; i < base.size(); ++i)
        shifted[i] = base[i] + eps * v[i];
    probe.set_flat_values(shifted);
    const auto plus = flat_gradient(probe, loss);

    for (std::size_t i = 0; i < base.size(); ++i)
        shifted[i] = base[i] - eps * v[i];
    probe.set_flat_values(shifted);
    const auto minus = flat_gradient(probe, loss);

    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (plus[i] - minus[i]) / (2.0 * eps);
    return out;
}

TaskGradient maml_task_gradient(const ParamSet& theta, const Objective& support_loss, const Objective& query_loss,
                                double alpha, int steps, MamlOrder order)
{
    if (steps < 0)
        throw ContractError("maml_task_gradient: negative step count");
    TaskGradient out;
    std::vector<ParamSet> iterates;
    if (order == MamlOrder::Second)
        iterates.reserve(static_cast<std::size_t>(steps));

    out.fast = clone_params(theta);
    for (int s = 0; s < steps; ++s) {
        if (order == MamlOrder::Second)
            iterates.push_back(clone_params(out.fast));
        out.fast.zero_grad();
        forward_and_grad(out.fast, support_loss);
        sgd_step(out.fast, alpha);
    }

    out.grad = flat_gradient(out.fast, query_loss, &out.query_value);
    if (order == MamlOrder::Second) {
        for (auto it = iterates.rbegin(); it != iterates.rend(); ++it) {
            const auto hv = hessian_vector_product(*it, support_loss, out.grad);
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                out.grad[i] -= alpha * hv[i];
        }
    }
    return out;
}

} // namespace stda

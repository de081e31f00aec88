#pragma once

#include <stda/param_set.hpp>
#include <stda/tape.hpp>

#include <span>
#include <vector>

namespace stda {

enum class MamlOrder { First, Second };

/// Clones theta and takes `steps` plain gradient-descent steps of size
/// `alpha` on `support_loss`. theta itself is never modified.
ParamSet inner_adapt(const ParamSet& theta, const Objective& support_loss, double alpha, int steps);

/// Meta-gradient contribution of one task.
struct TaskGradient {
    std::vector<double> grad; ///< flat, in theta's entry order
    double query_value = 0.0; ///< query objective at the adapted parameters
    ParamSet fast;            ///< adapted parameters
};

/// Adapts on the support objective, evaluates the query objective at the
/// adapted parameters and returns its gradient with respect to theta.
///
/// First order treats the inner updates as constant. Second order applies
/// prod_k (I - alpha H_k) in reverse step order, where H_k is the support
/// Hessian at the k-th inner iterate; Hessian-vector products come from
/// central differences of the analytic support gradient.
TaskGradient maml_task_gradient(const ParamSet& theta, const Objective& support_loss, const Objective& query_loss,
                                double alpha, int steps, MamlOrder order);

/// (grad L(p + eps v) - grad L(p - eps v)) / (2 eps), eps scaled to |v|.
std::vector<double> hessian_vector_product(const ParamSet& at, const Objective& loss, std::span<const double> v);

/// Flat gradient of `loss` at `at`.
std::vector<double> flat_gradient(const ParamSet& at, const Objective& loss, double* value = nullptr);

} // namespace stda

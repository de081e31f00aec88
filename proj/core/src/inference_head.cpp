#include <stda/errors.hpp>
#include <stda/inference_head.hpp>

#include <cmath>
#include <random>

namespace stda {

void init_head(ParamSet& params, std::size_t width, std::size_t horizon, std::uint64_t seed)
{
    if (width == 0 || horizon == 0)
        throw ContractError("init_head: dimensions must be positive");
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(1.0 / static_cast<double>(width));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseArray w({width, horizon});
    for (auto& v : w.data())
        v = dist(rng);
    DenseArray b({1, horizon});
    for (auto& v : b.data())
        v = dist(rng);
    params.add("head.W", std::move(w));
    params.add("head.b", std::move(b));
}

Var predict(Tape& tape, Var embedding, const ParamVars& params)
{
    Var w = params["head.W"];
    if (embedding.cols() != w.rows())
        throw ContractError("predict: embedding width differs from head input width");
    return tape.matmul(embedding, w) + params["head.b"];
}

DenseArray predict(const StEmbedding& z, const ParamSet& params)
{
    if (z.stage != EmbeddingStage::SpatioTemporal)
        throw ContractError("predict: requires a spatio-temporal embedding");
    Tape tape;
    auto p = tape.bind_constant(params);
    return predict(tape, tape.constant(z.z), p).value();
}

DenseArray target_matrix(const WindowBatch& windows)
{
    const auto b = windows.size(), n = windows.n_nodes, m = windows.horizon;
    DenseArray out = DenseArray::matrix(b * n, m);
    for (std::size_t k = 0; k < b; ++k)
        for (std::size_t s = 0; s < m; ++s)
            for (std::size_t i = 0; i < n; ++i)
                out(k * n + i, s) = windows.target(k, s, i);
    return out;
}

DenseArray mask_matrix(const WindowBatch& windows)
{
    const auto b = windows.size(), n = windows.n_nodes, m = windows.horizon;
    DenseArray out = DenseArray::matrix(b * n, m);
    for (std::size_t k = 0; k < b; ++k)
        for (std::size_t s = 0; s < m; ++s)
            for (std::size_t i = 0; i < n; ++i)
                out(k * n + i, s) = windows.target_mask(k, s, i);
    return out;
}

Var prediction_loss(Tape& tape, Var pred, const DenseArray& truth, const DenseArray& mask, LossForm form)
{
    const auto& pv = pred.value();
    if (pv.rows() != truth.rows() || pv.cols() != truth.cols() || !truth.same_shape(mask))
        throw ContractError("prediction_loss: prediction, truth and mask shapes differ");
    double count = 0.0;
    for (double m : mask.data())
        count += m;
    if (count == 0.0)
        throw ContractError("prediction_loss: every entry is masked");
    Var residual = tape.sub(pred, tape.constant(truth));
    Var sq = tape.mul(tape.square(residual), tape.constant(mask));
    Var mse = tape.scale(tape.sum(sq), 1.0 / count);
    return form == LossForm::Rmse ? tape.sqrt(mse) : mse;
}

double prediction_loss(const DenseArray& pred, const DenseArray& truth, const DenseArray& mask, LossForm form)
{
    Tape tape;
    return prediction_loss(tape, tape.constant(pred), truth, mask, form).value().item();
}

LossReport overall_loss(double l_p, double l_st, double lambda)
{
    if (l_p < 0.0 || l_st < 0.0)
        throw ContractError("overall_loss: component losses must be non-negative");
    if (lambda < 0.0)
        throw ContractError("overall_loss: lambda must be non-negative");
    return LossReport{l_p, l_st, lambda * l_st + l_p, lambda};
}

} // namespace stda

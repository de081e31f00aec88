#pragma once

#include <stda/dense_array.hpp>
#include <stda/param_set.hpp>
#include <stda/st_embedding.hpp>
#include <stda/tape.hpp>
#include <stda/windows.hpp>

#include <cstdint>

namespace stda {

/// Shared affine map d' -> M applied to every node row: "head.W", "head.b".
void init_head(ParamSet& params, std::size_t width, std::size_t horizon, std::uint64_t seed);

Var predict(Tape& tape, Var embedding, const ParamVars& params);
/// Requires a spatio-temporal embedding; returns rows x M.
DenseArray predict(const StEmbedding& z, const ParamSet& params);

/// Targets and mask of a batch as (B*n) x M, matching st_embed row order.
DenseArray target_matrix(const WindowBatch& windows);
DenseArray mask_matrix(const WindowBatch& windows);

enum class LossForm { Rmse, Mse };

/// sqrt(mean of masked squared residuals) (or the mean itself for Mse).
/// Throws ContractError when every entry is masked.
Var prediction_loss(Tape& tape, Var pred, const DenseArray& truth, const DenseArray& mask,
                    LossForm form = LossForm::Rmse);
double prediction_loss(const DenseArray& pred, const DenseArray& truth, const DenseArray& mask,
                       LossForm form = LossForm::Rmse);

struct LossReport {
    double l_p = 0.0;
    double l_st = 0.0;
    double l_overall = 0.0;
    double lambda = 0.0;
};

/// l_overall = lambda * l_st + l_p.
LossReport overall_loss(double l_p, double l_st, double lambda);

} // namespace stda

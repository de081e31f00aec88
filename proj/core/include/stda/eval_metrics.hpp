#pragma once

#include <stda/meta_trainer.hpp>
#include <stda/normalizer.hpp>
#include <stda/windows.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace stda {

/// Mean absolute error over entries whose mask is nonzero. An empty mask
/// means every entry counts. Throws MetricError when nothing is unmasked.
double mae(std::span<const double> truth, std::span<const double> pred, std::span<const double> mask = {});
/// Root mean squared error, same masking rules as mae.
double rmse(std::span<const double> truth, std::span<const double> pred, std::span<const double> mask = {});

struct HorizonRow {
    std::size_t step = 0;
    int minutes = 0;
    double mae = 0.0;  ///< original speed units
    double rmse = 0.0;
    double mae_norm = 0.0; ///< normalized units
    double rmse_norm = 0.0;
    std::size_t n = 0;
};

struct HorizonReport {
    std::vector<HorizonRow> rows;
    bool zero_shot = false;

    /// Mean of the per-horizon MAE (original units); the headline number.
    double mean_mae() const;
    double mean_rmse() const;
};

inline constexpr std::size_t kDefaultHorizons[] = {1, 3, 6};

/// Metrics from normalized predictions laid out like target_matrix(windows).
HorizonReport horizon_report(const DenseArray& pred, const WindowBatch& windows, const Normalizer& normalizer,
                             std::span<const std::size_t> horizons, int interval_minutes);

/// Runs theta over normalized test windows in chunks, de-normalizes, and
/// reports the requested 1-based horizons.
HorizonReport evaluate_horizons(const ParamSet& theta, const WindowBatch& test, const TrafficGraph& graph,
                                const Normalizer& normalizer, const ModelConfig& model,
                                std::span<const std::size_t> horizons = kDefaultHorizons);

/// evaluate_horizons on the target test split of `data`, one window every
/// `stride` steps.
HorizonReport evaluate_target(const ParamSet& theta, const TrainingData& data, const ModelConfig& model,
                              std::span<const std::size_t> horizons = kDefaultHorizons, std::size_t stride = 1);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; ///< population standard deviation
};
MeanStd mean_std(std::span<const double> values);

struct SweepPoint {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double mae = 0.0;
    double rmse = 0.0;
};

struct SweepRow {
    double lambda = 0.0;
    double mae = 0.0; ///< mean over seeds
    double rmse = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points; ///< lambda-major, seeds in given order
    std::vector<SweepRow> table;
};

using SweepCallback = std::function<void(const SweepPoint&)>;

/// One run_variant(full) per (lambda, seed), evaluated on the target test split.
SweepResult lambda_sweep(std::span<const double> lambdas, std::span<const std::uint64_t> seeds,
                         const TrainingData& data, const ModelConfig& model, const MetaConfig& config,
                         std::span<const std::size_t> horizons = kDefaultHorizons, std::size_t stride = 1,
                         const SweepCallback& on_point = {});

/// True when the smallest entry of `curve` is neither the first nor the last.
bool interior_minimum(std::span<const double> curve);

} // namespace stda

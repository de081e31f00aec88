#include <stda/errors.hpp>
#include <stda/eval_metrics.hpp>
#include <stda/inference_head.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stda {

namespace {

template <class F>
double masked_mean(std::span<const double> truth, std::span<const double> pred, std::span<const double> mask,
                   const char* name, F&& f)
{
    if (truth.size() != pred.size())
        throw ContractError(std::string(name) + ": truth and prediction lengths differ");
    if (!mask.empty() && mask.size() != truth.size())
        throw ContractError(std::string(name) + ": mask length differs");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!mask.empty() && mask[i] == 0.0)
            continue;
        acc += f(truth[i] - pred[i]);
        ++n;
    }
    if (n == 0)
        throw MetricError(std::string(name) + ": every entry is masked");
    return acc / static_cast<double>(n);
}

constexpr std::size_t kEvalChunk = 16;

} // namespace

double mae(std::span<const double> truth, std::span<const double> pred, std::span<const double> mask)
{
    return masked_mean(truth, pred, mask, "mae", [](double r) { return std::abs(r); });
}

double rmse(std::span<const double> truth, std::span<const double> pred, std::span<const double> mask)
{
    return std::sqrt(masked_mean(truth, pred, mask, "rmse", [](double r) { return r * r; }));
}

double HorizonReport::mean_mae() const
{
    if (rows.empty())
        throw MetricError("HorizonReport: no rows");
    double s = 0.0;
    for (const auto& r : rows)
        s += r.mae;
    return s / static_cast<double>(rows.size());
}

double HorizonReport::mean_rmse() const
{
    if (rows.empty())
        throw MetricError("HorizonReport: no rows");
    double s = 0.0;
    for (const auto& r : rows)
        s += r.rmse;
    return s / static_cast<double>(rows.size());
}

HorizonReport horizon_report(const DenseArray& pred, const WindowBatch& windows, const Normalizer& normalizer,
                             std::span<const std::size_t> horizons, int interval_minutes)
{
    const auto n = windows.n_nodes;
    const auto m = windows.horizon;
    const auto b = windows.size();
    if (pred.rows() != b * n || pred.cols() != m)
        throw ContractError("horizon_report: prediction shape " + shape_to_string(pred.shape())
                            + " does not match the windows");
    if (normalizer.n_nodes() != n)
        throw ContractError("horizon_report: normalizer node count differs");
    if (horizons.empty())
        throw ContractError("horizon_report: no horizons requested");

    HorizonReport report;
    for (const auto h : horizons) {
        if (h < 1 || h > m)
            throw ContractError("horizon_report: horizon " + std::to_string(h) + " outside [1, "
                                + std::to_string(m) + "]");
        std::vector<double> truth, guess, truth_raw, guess_raw;
        truth.reserve(b * n);
        for (std::size_t k = 0; k < b; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                const auto at = (k * m + (h - 1)) * n + i;
                if (windows.mask[at] == 0.0)
                    continue;
                const double t = windows.targets[at];
                const double p = pred(k * n + i, h - 1);
                truth.push_back(t);
                guess.push_back(p);
                truth_raw.push_back(normalizer.invert(t, i));
                guess_raw.push_back(normalizer.invert(p, i));
            }
        HorizonRow row;
        row.step = h;
        row.minutes = static_cast<int>(h) * interval_minutes;
        row.n = truth.size();
        row.mae = mae(truth_raw, guess_raw);
        row.rmse = rmse(truth_raw, guess_raw);
        row.mae_norm = mae(truth, guess);
        row.rmse_norm = rmse(truth, guess);
        report.rows.push_back(row);
    }
    return report;
}

HorizonReport evaluate_horizons(const ParamSet& theta, const WindowBatch& test, const TrafficGraph& graph,
                                const Normalizer& normalizer, const ModelConfig& model,
                                std::span<const std::size_t> horizons)
{
    if (test.empty())
        throw ContractError("evaluate_horizons: empty test set");
    const auto n = test.n_nodes;
    DenseArray pred = DenseArray::matrix(test.size() * n, test.horizon);
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < test.size(); first += kEvalChunk) {
        const auto last = std::min(test.size(), first + kEvalChunk);
        idx.resize(last - first);
        std::iota(idx.begin(), idx.end(), first);
        const auto chunk = test.select(idx);
        const auto z = st_embed(chunk, graph, theta, model.encoder);
        const auto part = predict(z, theta);
        std::copy(part.values().begin(), part.values().end(),
                  pred.data().begin() + static_cast<std::ptrdiff_t>(first * n * test.horizon));
    }
    return horizon_report(pred, test, normalizer, horizons, graph.interval_minutes());
}

HorizonReport evaluate_target(const ParamSet& theta, const TrainingData& data, const ModelConfig& model,
                              std::span<const std::size_t> horizons, std::size_t stride)
{
    const auto test = make_windows(data.target().series, model.history, model.horizon, data.test_range(), stride);
    auto report = evaluate_horizons(theta, test, data.target().graph, data.target_normalizer(), model, horizons);
    report.zero_shot = data.zero_shot();
    return report;
}

MeanStd mean_std(std::span<const double> values)
{
    if (values.empty())
        throw MetricError("mean_std: no values");
    MeanStd out;
    for (const double v : values)
        out.mean += v;
    out.mean /= static_cast<double>(values.size());
    for (const double v : values)
        out.std += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(out.std / static_cast<double>(values.size()));
    return out;
}

SweepResult lambda_sweep(std::span<const double> lambdas, std::span<const std::uint64_t> seeds,
                         const TrainingData& data, const ModelConfig& model, const MetaConfig& config,
                         std::span<const std::size_t> horizons, std::size_t stride, const SweepCallback& on_point)
{
    if (lambdas.empty())
        throw ConfigError("lambda_sweep: empty lambda list");
    if (seeds.empty())
        throw ConfigError("lambda_sweep: empty seed list");
    SweepResult out;
    for (const double lambda : lambdas) {
        if (!(lambda >= 0.0))
            throw ConfigError("lambda_sweep: lambda must be non-negative");
        std::vector<double> maes, rmses;
        for (const auto seed : seeds) {
            MetaConfig cfg = config;
            cfg.lambda = lambda;
            cfg.seed = seed;
            const auto state = run_variant(Variant::Full, data, model, cfg);
            const auto report = evaluate_target(state.theta, data, model, horizons, stride);
            SweepPoint point{lambda, seed, report.mean_mae(), report.mean_rmse()};
            maes.push_back(point.mae);
            rmses.push_back(point.rmse);
            out.points.push_back(point);
            if (on_point)
                on_point(point);
        }
        out.table.push_back(SweepRow{lambda, mean_std(maes).mean, mean_std(rmses).mean});
    }
    return out;
}

bool interior_minimum(std::span<const double> curve)
{
    if (curve.size() < 3)
        return false;
    const auto at = std::min_element(curve.begin(), curve.end()) - curve.begin();
    return at > 0 && static_cast<std::size_t>(at) + 1 < curve.size();
}

} // namespace stda

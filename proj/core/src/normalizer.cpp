#include <stda/errors.hpp>
#include <stda/log.hpp>
#include <stda/normalizer.hpp>

#include <cmath>

namespace stda {

Normalizer fit_normalizer(const SpeedSeries& series, TimeRange train_range)
{
    if (train_range.empty())
        throw ContractError("fit_normalizer: empty training range");
    if (train_range.end > series.steps())
        throw ContractError("fit_normalizer: training range exceeds series length");
    const auto n = series.n_nodes();
    Normalizer norm;
    norm.mean.assign(n, 0.0);
    norm.std.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::size_t count = 0;
        for (auto t = train_range.begin; t < train_range.end; ++t)
            if (series.valid[t * n + i]) {
                sum += series.values(t, i);
                ++count;
            }
        if (count == 0) {
            warn("fit_normalizer: node " + series.node_ids[i] + " of " + series.city_id
                 + " has no observations in the training range");
            continue;
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (auto t = train_range.begin; t < train_range.end; ++t)
            if (series.valid[t * n + i]) {
                const double d = series.values(t, i) - mean;
                ss += d * d;
            }
        double sd = std::sqrt(ss / static_cast<double>(count));
        if (sd < kStdEpsilon) {
            warn("fit_normalizer: node " + series.node_ids[i] + " of " + series.city_id
                 + " is constant; std clamped");
            sd = kStdEpsilon;
        }
        norm.mean[i] = mean;
        norm.std[i] = sd;
    }
    return norm;
}

Normalizer pooled_normalizer(std::span<const SpeedSeries* const> series, std::size_t n_nodes)
{
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto* s : series) {
        for (std::size_t k = 0; k < s->values.size(); ++k)
            if (s->valid[k]) {
                sum += s->values[k];
                ++count;
            }
    }
    if (count == 0)
        throw ContractError("pooled_normalizer: no observations");
    const double mean = sum / static_cast<double>(count);
    for (const auto* s : series)
        for (std::size_t k = 0; k < s->values.size(); ++k)
            if (s->valid[k])
                sq += (s->values[k] - mean) * (s->values[k] - mean);
    const double sd = std::max(std::sqrt(sq / static_cast<double>(count)), kStdEpsilon);
    return Normalizer{std::vector<double>(n_nodes, mean), std::vector<double>(n_nodes, sd)};
}

SpeedSeries Normalizer::apply(const SpeedSeries& series) const
{
    if (series.n_nodes() != n_nodes())
        throw ContractError("Normalizer::apply: node count mismatch");
    SpeedSeries out = series;
    const auto n = series.n_nodes();
    for (std::size_t t = 0; t < series.steps(); ++t)
        for (std::size_t i = 0; i < n; ++i)
            out.values(t, i) = series.valid[t * n + i] ? apply(series.values(t, i), i) : 0.0;
    return out;
}

SpeedSeries Normalizer::invert(const SpeedSeries& series) const
{
    if (series.n_nodes() != n_nodes())
        throw ContractError("Normalizer::invert: node count mismatch");
    SpeedSeries out = series;
    const auto n = series.n_nodes();
    for (std::size_t t = 0; t < series.steps(); ++t)
        for (std::size_t i = 0; i < n; ++i)
            out.values(t, i) = series.valid[t * n + i] ? invert(series.values(t, i), i) : 0.0;
    return out;
}

} // namespace stda

#pragma once

#include <stda/traffic_graph.hpp>

#include <span>
#include <vector>

namespace stda {

inline constexpr double kStdEpsilon = 1e-8;

/// Per-node Z-score statistics.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;

    std::size_t n_nodes() const noexcept { return mean.size(); }

    double apply(double value, std::size_t node) const { return (value - mean[node]) / std[node]; }
    double invert(double value, std::size_t node) const { return value * std[node] + mean[node]; }

    /// Normalized copy; missing readings become 0 and stay masked.
    SpeedSeries apply(const SpeedSeries& series) const;
    SpeedSeries invert(const SpeedSeries& series) const;
};

/// Population mean/std per node over observed entries of `train_range`.
/// Constant nodes get std clamped to kStdEpsilon with a warning.
Normalizer fit_normalizer(const SpeedSeries& series, TimeRange train_range);

/// Single mean/std pooled over every observed entry of the given series,
/// replicated for n_nodes. Used when a city has no data to fit on.
Normalizer pooled_normalizer(std::span<const SpeedSeries* const> series, std::size_t n_nodes);

} // namespace stda

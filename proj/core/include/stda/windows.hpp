#pragma once

#include <stda/dense_array.hpp>
#include <stda/traffic_graph.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stda {

/// B sliding windows: H history steps feeding M target steps, per node.
struct WindowBatch {
    std::string city_id;
    std::size_t history = 0;
    std::size_t horizon = 0;
    std::size_t n_nodes = 0;
    std::vector<std::size_t> starts; ///< first input step of each window
    DenseArray inputs;               ///< B x H x n
    DenseArray targets;              ///< B x M x n
    DenseArray mask;                 ///< B x M x n, 1 = observed target

    std::size_t size() const noexcept { return starts.size(); }
    bool empty() const noexcept { return starts.empty(); }
    double input(std::size_t b, std::size_t t, std::size_t node) const
    {
        return inputs[(b * history + t) * n_nodes + node];
    }
    double target(std::size_t b, std::size_t m, std::size_t node) const
    {
        return targets[(b * horizon + m) * n_nodes + node];
    }
    double target_mask(std::size_t b, std::size_t m, std::size_t node) const
    {
        return mask[(b * horizon + m) * n_nodes + node];
    }

    /// Sub-batch holding the listed windows, in the given order.
    WindowBatch select(std::span<const std::size_t> which) const;
};

/// Number of windows make_windows would return (0 when the range is short).
std::size_t window_count(std::size_t range_length, std::size_t history, std::size_t horizon, std::size_t stride);

/// All windows inside `range` at `stride`. Throws SamplingError when the
/// range cannot hold one window.
WindowBatch make_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon, TimeRange range,
                         std::size_t stride = 1);

/// Windows starting at the given steps.
WindowBatch extract_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon,
                            std::span<const std::size_t> starts);

/// One meta-learning task from a single city.
struct EpisodeTask {
    std::size_t city = 0; ///< index into the sampler's source list
    std::string city_id;
    WindowBatch support;
    WindowBatch query;
};

struct TaskSource {
    const TrafficGraph* graph = nullptr;
    const SpeedSeries* series = nullptr; ///< normalized
    TimeRange range;
};

struct TaskSpec {
    std::size_t history = 12;
    std::size_t horizon = 6;
    std::size_t support_size = 8;
    std::size_t query_size = 8;
};

/// Draws `n_tasks` tasks. Each picks one eligible city uniformly, then
/// support_size + query_size distinct windows without replacement.
std::vector<EpisodeTask> sample_tasks(std::span<const TaskSource> cities, const TaskSpec& spec, std::size_t n_tasks,
                                      std::uint64_t seed);

/// Random windows (without replacement) from one range.
WindowBatch sample_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon, TimeRange range,
                           std::size_t count, std::uint64_t seed);

/// First `adapt_days` for adaptation, the rest for testing.
std::pair<TimeRange, TimeRange> target_split(const SpeedSeries& series, int adapt_days);

} // namespace stda

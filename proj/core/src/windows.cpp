#include <stda/errors.hpp>
#include <stda/windows.hpp>

#include <algorithm>
#include <numeric>
#include <random>

namespace stda {

std::size_t window_count(std::size_t range_length, std::size_t history, std::size_t horizon, std::size_t stride)
{
    if (stride == 0)
        throw ContractError("window_count: stride must be positive");
    if (range_length < history + horizon)
        return 0;
    return (range_length - history - horizon) / stride + 1;
}

WindowBatch extract_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon,
                            std::span<const std::size_t> starts)
{
    if (history == 0 || horizon == 0)
        throw ContractError("extract_windows: history and horizon must be positive");
    if (starts.empty())
        throw SamplingError("extract_windows: no windows requested");
    const auto n = series.n_nodes();
    const auto b = starts.size();
    WindowBatch out;
    out.city_id = series.city_id;
    out.history = history;
    out.horizon = horizon;
    out.n_nodes = n;
    out.starts.assign(starts.begin(), starts.end());
    out.inputs = DenseArray({b, history, n});
    out.targets = DenseArray({b, horizon, n});
    out.mask = DenseArray({b, horizon, n});
    for (std::size_t k = 0; k < b; ++k) {
        const auto s = starts[k];
        if (s + history + horizon > series.steps())
            throw SamplingError("extract_windows: window starting at " + std::to_string(s) + " runs past the series");
        for (std::size_t t = 0; t < history; ++t)
            for (std::size_t i = 0; i < n; ++i)
                out.inputs[(k * history + t) * n + i] = series.values(s + t, i);
        for (std::size_t m = 0; m < horizon; ++m)
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = s + history + m;
                out.targets[(k * horizon + m) * n + i] = series.values(row, i);
                out.mask[(k * horizon + m) * n + i] = series.valid[row * n + i] ? 1.0 : 0.0;
            }
    }
    return out;
}

WindowBatch make_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon, TimeRange range,
                         std::size_t stride)
{
    if (range.end > series.steps())
        throw ContractError("make_windows: range exceeds series length");
    const auto count = window_count(range.length(), history, horizon, stride);
    if (count == 0)
        throw SamplingError("make_windows: range of " + std::to_string(range.length())
                            + " steps cannot hold a window of " + std::to_string(history + horizon));
    std::vector<std::size_t> starts(count);
    for (std::size_t k = 0; k < count; ++k)
        starts[k] = range.begin + k * stride;
    return extract_windows(series, history, horizon, starts);
}

WindowBatch WindowBatch::select(std::span<const std::size_t> which) const
{
    if (which.empty())
        throw SamplingError("WindowBatch::select: empty selection");
    const auto b = which.size();
    WindowBatch out;
    out.city_id = city_id;
    out.history = history;
    out.horizon = horizon;
    out.n_nodes = n_nodes;
    out.inputs = DenseArray({b, history, n_nodes});
    out.targets = DenseArray({b, horizon, n_nodes});
    out.mask = DenseArray({b, horizon, n_nodes});
    const auto in_block = history * n_nodes;
    const auto tg_block = horizon * n_nodes;
    for (std::size_t k = 0; k < b; ++k) {
        const auto w = which[k];
        if (w >= size())
            throw ContractError("WindowBatch::select: index out of range");
        out.starts.push_back(starts[w]);
        std::copy_n(inputs.data().begin() + static_cast<std::ptrdiff_t>(w * in_block), in_block,
                    out.inputs.data().begin() + static_cast<std::ptrdiff_t>(k * in_block));
        std::copy_n(targets.data().begin() + static_cast<std::ptrdiff_t>(w * tg_block), tg_block,
                    out.targets.data().begin() + static_cast<std::ptrdiff_t>(k * tg_block));
        std::copy_n(mask.data().begin() + static_cast<std::ptrdiff_t>(w * tg_block), tg_block,
                    out.mask.data().begin() + static_cast<std::ptrdiff_t>(k * tg_block));
    }
    return out;
}

namespace {

// First `count` entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> draw_distinct(std::size_t n, std::size_t count, std::mt19937_64& rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < count; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

} // namespace

std::vector<EpisodeTask> sample_tasks(std::span<const TaskSource> cities, const TaskSpec& spec, std::size_t n_tasks,
                                      std::uint64_t seed)
{
    if (spec.support_size == 0 || spec.query_size == 0)
        throw ContractError("sample_tasks: support and query sizes must be positive");
    const auto need = spec.support_size + spec.query_size;
    std::vector<std::size_t> eligible;
    for (std::size_t c = 0; c < cities.size(); ++c) {
        const auto& src = cities[c];
        if (window_count(src.range.length(), spec.history, spec.horizon, 1) >= need)
            eligible.push_back(c);
    }
    if (eligible.empty())
        throw SamplingError("sample_tasks: no city has " + std::to_string(need) + " windows");

    std::mt19937_64 rng(seed);
    std::vector<EpisodeTask> tasks;
    tasks.reserve(n_tasks);
    for (std::size_t k = 0; k < n_tasks; ++k) {
        std::uniform_int_distribution<std::size_t> pick_city(0, eligible.size() - 1);
        const auto c = eligible[pick_city(rng)];
        const auto& src = cities[c];
        const auto available = window_count(src.range.length(), spec.history, spec.horizon, 1);
        auto picks = draw_distinct(available, need, rng);
        std::vector<std::size_t> support_starts, query_starts;
        for (std::size_t j = 0; j < need; ++j)
            (j < spec.support_size ? support_starts : query_starts).push_back(src.range.begin + picks[j]);
        EpisodeTask task;
        task.city = c;
        task.city_id = src.series->city_id;
        task.support = extract_windows(*src.series, spec.history, spec.horizon, support_starts);
        task.query = extract_windows(*src.series, spec.history, spec.horizon, query_starts);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

WindowBatch sample_windows(const SpeedSeries& series, std::size_t history, std::size_t horizon, TimeRange range,
                           std::size_t count, std::uint64_t seed)
{
    const auto available = window_count(range.length(), history, horizon, 1);
    if (available == 0)
        throw SamplingError("sample_windows: range too short for one window");
    count = std::min(count, available);
    std::mt19937_64 rng(seed);
    auto picks = draw_distinct(available, count, rng);
    for (auto& p : picks)
        p += range.begin;
    return extract_windows(series, history, horizon, picks);
}

std::pair<TimeRange, TimeRange> target_split(const SpeedSeries& series, int adapt_days)
{
    if (adapt_days < 0)
        throw ContractError("target_split: negative adapt_days");
    if (series.interval_minutes <= 0 || 1440 % series.interval_minutes != 0)
        throw ContractError("target_split: interval must divide a day");
    const auto per_day = static_cast<std::size_t>(1440 / series.interval_minutes);
    const auto adapt_steps = per_day * static_cast<std::size_t>(adapt_days);
    if (series.steps() <= adapt_steps)
        throw SamplingError("target_split: series of " + std::to_string(series.steps()) + " steps does not exceed "
                            + std::to_string(adapt_days) + " days");
    return {TimeRange{0, adapt_steps}, TimeRange{adapt_steps, series.steps()}};
}

} // namespace stda

#include <stda/city_io.hpp>
#include <stda/errors.hpp>
#include <stda/synth.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace stda {

namespace {

constexpr int kMaxGraphAttempts = 20;
// 2012-03-01T00:00 in epoch minutes; all synthetic series start here.
constexpr std::int64_t kSynthEpochMinutes = 15400LL * 1440;

TrafficGraph random_geometric_graph(const SynthConfig& cfg, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int attempt = 0; attempt < kMaxGraphAttempts; ++attempt) {
        std::vector<double> x(cfg.n_nodes), y(cfg.n_nodes);
        for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
            x[i] = unit(rng);
            y[i] = unit(rng);
        }
        std::vector<Edge> edges;
        for (std::size_t i = 0; i < cfg.n_nodes; ++i)
            for (std::size_t j = i + 1; j < cfg.n_nodes; ++j) {
                const double d = std::hypot(x[i] - x[j], y[i] - y[j]);
                if (d < cfg.radius)
                    edges.push_back(Edge{i, j, std::exp(-(d * d) / (cfg.radius * cfg.radius))});
            }
        TrafficGraph g(cfg.city_id, cfg.n_nodes, edges, cfg.interval_minutes);
        if (g.connected())
            return g;
    }
    throw Error("synth_city: radius " + std::to_string(cfg.radius) + " gave a disconnected graph in "
                + std::to_string(kMaxGraphAttempts) + " attempts");
}

void validate(const SynthConfig& cfg)
{
    if (cfg.n_nodes == 0 || cfg.n_days <= 0 || cfg.interval_minutes <= 0 || 1440 % cfg.interval_minutes != 0)
        throw ContractError("SynthConfig: sizes must be positive and the interval must divide a day");
    if (!(cfg.radius > 0.0) || cfg.noise_std < 0.0 || cfg.wave_rate < 0.0 || cfg.wave_rate > 1.0
        || cfg.diurnal_amplitude < 0.0 || cfg.wave_depth < 0.0 || cfg.wave_decay < 0.0 || cfg.wave_decay > 1.0)
        throw ContractError("SynthConfig: parameter out of range");
}

} // namespace

std::vector<double> diffusion_step(const TrafficGraph& graph, std::span<const double> congestion, double decay)
{
    const auto n = graph.n_nodes();
    if (congestion.size() != n)
        throw ContractError("diffusion_step: congestion vector length differs from node count");
    const auto& w = graph.adjacency();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0, acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += w(i, j);
            acc += w(i, j) * congestion[j];
        }
        out[i] = decay * acc / row;
    }
    return out;
}

CityData synth_city(const SynthConfig& cfg)
{
    validate(cfg);
    std::mt19937_64 rng(cfg.seed);
    TrafficGraph graph = random_geometric_graph(cfg, rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double city_phase = 2.0 * std::numbers::pi * unit(rng);
    std::vector<double> phase(cfg.n_nodes), base(cfg.n_nodes);
    for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
        phase[i] = city_phase + 0.6 * (unit(rng) - 0.5);
        base[i] = cfg.base_speed + 10.0 * (unit(rng) - 0.5);
    }

    const auto per_day = static_cast<std::size_t>(1440 / cfg.interval_minutes);
    const auto steps = per_day * static_cast<std::size_t>(cfg.n_days);
    const auto n = cfg.n_nodes;

    SpeedSeries series;
    series.city_id = cfg.city_id;
    series.interval_minutes = cfg.interval_minutes;
    for (std::size_t i = 0; i < n; ++i)
        series.node_ids.push_back(cfg.city_id + "_" + std::to_string(i));
    series.values = DenseArray::matrix(steps, n);
    series.valid.assign(steps * n, 1);
    series.timestamps.resize(steps);

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> congestion(n, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        if (t > 0)
            congestion = diffusion_step(graph, congestion, cfg.wave_decay);
        for (std::size_t i = 0; i < n; ++i)
            if (cfg.wave_rate > 0.0 && unit(rng) < cfg.wave_rate)
                congestion[i] += cfg.wave_depth * (0.5 + unit(rng));
        series.timestamps[t] = kSynthEpochMinutes + static_cast<std::int64_t>(t) * cfg.interval_minutes;
        const double day_angle = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(per_day);
        for (std::size_t i = 0; i < n; ++i) {
            double v = base[i] - cfg.diurnal_amplitude * std::sin(day_angle + phase[i]) - congestion[i];
            if (cfg.noise_std > 0.0)
                v += cfg.noise_std * noise(rng);
            series.values(t, i) = std::max(v, 1.0);
        }
    }
    return CityData{std::move(graph), std::move(series)};
}

std::vector<CityData> synth_cities(std::span<const SynthConfig> configs)
{
    for (std::size_t a = 0; a < configs.size(); ++a)
        for (std::size_t b = a + 1; b < configs.size(); ++b)
            if (configs[a].seed == configs[b].seed)
                throw ContractError("synth_cities: seeds must be distinct per city");
    std::vector<CityData> out;
    out.reserve(configs.size());
    for (const auto& cfg : configs)
        out.push_back(synth_city(cfg));
    return out;
}

} // namespace stda

#pragma once

#include <stda/traffic_graph.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stda {

/// Parameters of one synthetic city.
struct SynthConfig {
    std::string city_id = "synth";
    std::size_t n_nodes = 20;
    int n_days = 7;
    int interval_minutes = 5;
    std::uint64_t seed = 1;
    double base_speed = 60.0;
    double diurnal_amplitude = 12.0;
    double wave_rate = 0.01;   ///< per node, per step probability of a congestion shock
    double wave_depth = 20.0;  ///< mean shock size in speed units
    double wave_decay = 0.9;   ///< retained congestion per diffusion step
    double noise_std = 1.0;
    double radius = 0.4;       ///< random geometric graph connection radius (unit square)
};

/// One diffusion step of congestion: decay * P * c with P the row-normalized
/// adjacency (self-loops included).
std::vector<double> diffusion_step(const TrafficGraph& graph, std::span<const double> congestion, double decay);

/// speed = base - amplitude * sin(2 pi t / day + phase) - congestion + noise.
/// Congestion shocks diffuse along the graph. Throws Error when no connected
/// graph is found within 20 attempts.
CityData synth_city(const SynthConfig& config);
std::vector<CityData> synth_cities(std::span<const SynthConfig> configs);

} // namespace stda

#pragma once

#include <stda/dense_array.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace stda {

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    double weight = 1.0;
};

/// Static, undirected road network with self-loops on every node.
///
/// Weights only decide connectivity for attention: j is a neighbor of i when
/// W(i, j) > 0. Neighbor lists include i itself and are sorted ascending.
class TrafficGraph {
public:
    TrafficGraph() = default;

    /// Symmetrizes `edges` with max(W, W^T) and sets a unit self-loop on any
    /// node whose diagonal is zero. Throws LoadError on out-of-range endpoints
    /// or negative weights.
    TrafficGraph(std::string city_id, std::size_t n_nodes, const std::vector<Edge>& edges, int interval_minutes);

    const std::string& city_id() const noexcept { return city_id_; }
    std::size_t n_nodes() const noexcept { return n_nodes_; }
    int interval_minutes() const noexcept { return interval_minutes_; }
    const DenseArray& adjacency() const noexcept { return adjacency_; }

    /// Distinct undirected pairs (src < dst) with positive weight.
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::size_t n_edges() const noexcept { return edges_.size(); }

    std::vector<std::size_t> neighbors(std::size_t node) const;
    /// CSR view over neighbor lists.
    const std::vector<std::size_t>& neighbor_offsets() const noexcept { return offsets_; }
    const std::vector<std::size_t>& neighbor_index() const noexcept { return neighbor_index_; }

    bool connected() const;

    /// Same graph with node i relabelled perm[i].
    TrafficGraph permuted(const std::vector<std::size_t>& perm) const;

    friend bool operator==(const TrafficGraph&, const TrafficGraph&) = default;

private:
    void build_neighbors();

    std::string city_id_;
    std::size_t n_nodes_ = 0;
    int interval_minutes_ = 5;
    DenseArray adjacency_;
    std::vector<Edge> edges_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbor_index_;
};

inline bool operator==(const Edge& a, const Edge& b)
{
    return a.src == b.src && a.dst == b.dst && a.weight == b.weight;
}

/// Half-open range of time-step indices.
struct TimeRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const noexcept { return end > begin ? end - begin : 0; }
    bool empty() const noexcept { return length() == 0; }
    friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

/// T x n speed matrix with a validity mask (0 marks a missing reading).
struct SpeedSeries {
    std::string city_id;
    std::vector<std::string> node_ids;
    DenseArray values;                 ///< T x n
    std::vector<std::uint8_t> valid;   ///< T x n, 1 = observed
    std::vector<std::int64_t> timestamps; ///< minutes since the Unix epoch
    int interval_minutes = 5;

    std::size_t steps() const noexcept { return timestamps.size(); }
    std::size_t n_nodes() const noexcept { return node_ids.size(); }
    TimeRange full_range() const noexcept { return {0, steps()}; }

    friend bool operator==(const SpeedSeries&, const SpeedSeries&) = default;
};

/// Loaded or generated city: graph plus speed series.
struct CityData {
    TrafficGraph graph;
    SpeedSeries series;
};

} // namespace stda

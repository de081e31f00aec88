#include <stda/errors.hpp>
#include <stda/traffic_graph.hpp>

#include <algorithm>
#include <queue>

namespace stda {

TrafficGraph::TrafficGraph(std::string city_id, std::size_t n_nodes, const std::vector<Edge>& edges,
                           int interval_minutes)
    : city_id_(std::move(city_id)), n_nodes_(n_nodes), interval_minutes_(interval_minutes)
{
    if (n_nodes == 0)
        throw LoadError("graph '" + city_id_ + "' has no nodes");
    if (interval_minutes <= 0)
        throw LoadError("graph '" + city_id_ + "' has a non-positive interval");
    adjacency_ = DenseArray::matrix(n_nodes, n_nodes);
    for (const auto& e : edges) {
        if (e.src >= n_nodes || e.dst >= n_nodes)
            throw LoadError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") out of range for "
                            + std::to_string(n_nodes) + " nodes");
        if (!(e.weight >= 0.0))
            throw LoadError("negative edge weight on (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")");
        double& a = adjacency_(e.src, e.dst);
        double& b = adjacency_(e.dst, e.src);
        a = std::max(a, e.weight);
        b = std::max(b, e.weight);
    }
    for (std::size_t i = 0; i < n_nodes; ++i)
        if (adjacency_(i, i) == 0.0)
            adjacency_(i, i) = 1.0;
    for (std::size_t i = 0; i < n_nodes; ++i)
        for (std::size_t j = i + 1; j < n_nodes; ++j)
            if (adjacency_(i, j) > 0.0)
                edges_.push_back(Edge{i, j, adjacency_(i, j)});
    build_neighbors();
}

void TrafficGraph::build_neighbors()
{
    offsets_.assign(1, 0);
    neighbor_index_.clear();
    for (std::size_t i = 0; i < n_nodes_; ++i) {
        for (std::size_t j = 0; j < n_nodes_; ++j)
            if (adjacency_(i, j) > 0.0)
                neighbor_index_.push_back(j);
        offsets_.push_back(neighbor_index_.size());
    }
}

std::vector<std::size_t> TrafficGraph::neighbors(std::size_t node) const
{
    return {neighbor_index_.begin() + static_cast<std::ptrdiff_t>(offsets_[node]),
            neighbor_index_.begin() + static_cast<std::ptrdiff_t>(offsets_[node + 1])};
}

bool TrafficGraph::connected() const
{
    std::vector<bool> seen(n_nodes_, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        auto i = q.front();
        q.pop();
        for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) {
            auto j = neighbor_index_[k];
            if (!seen[j]) {
                seen[j] = true;
                ++count;
                q.push(j);
            }
        }
    }
    return count == n_nodes_;
}

TrafficGraph TrafficGraph::permuted(const std::vector<std::size_t>& perm) const
{
    if (perm.size() != n_nodes_)
        throw ContractError("TrafficGraph::permuted: permutation size mismatch");
    std::vector<Edge> edges;
    for (const auto& e : edges_)
        edges.push_back(Edge{perm[e.src], perm[e.dst], e.weight});
    TrafficGraph out(city_id_, n_nodes_, edges, interval_minutes_);
    for (std::size_t i = 0; i < n_nodes_; ++i)
        out.adjacency_(perm[i], perm[i]) = adjacency_(i, i);
    return out;
}

} // namespace stda

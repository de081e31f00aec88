#pragma once

#include <stda/dense_array.hpp>
#include <stda/param_set.hpp>
#include <stda/tape.hpp>
#include <stda/traffic_graph.hpp>
#include <stda/windows.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stda {

/// How the second temporal extractor consumes the spatial stage.
enum class SandwichMode {
    Sequence,   ///< attention applied to all H temporal states; TF2 runs over the H results
    FinalState, ///< attention applied to the final temporal state only; TF2 runs one step
};

struct EncoderConfig {
    std::size_t input_dim = 1;
    std::size_t hidden = 32; ///< d' (also the attention output width O)
    std::size_t heads = 4;   ///< K
    double leaky_slope = 0.2;
    SandwichMode mode = SandwichMode::Sequence;
};

enum class EmbeddingStage { Temporal, Spatial, SpatioTemporal };

/// Per-node embedding rows tagged with the stage that produced them.
struct StEmbedding {
    DenseArray z; ///< rows x d'
    EmbeddingStage stage = EmbeddingStage::Temporal;
};

// Parameter names. GRU blocks live under "tf1." and "tf2.", attention heads
// under "sf.W<k>" (d' x d') and "sf.a<k>" (2d' x 1).
inline constexpr std::string_view kTemporalIn = "tf1";
inline constexpr std::string_view kTemporalOut = "tf2";

std::string gat_weight_name(std::size_t head);
std::string gat_attention_name(std::size_t head);

/// Adds W_ir, W_iz, W_in (in x hidden), W_hr, W_hz, W_hn (hidden x hidden)
/// and the six 1 x hidden biases under `prefix.`, uniform in +-sqrt(1/fan_in).
void init_gru_params(ParamSet& params, std::string_view prefix, std::size_t input_dim, std::size_t hidden,
                     std::uint64_t seed);
void init_gat_params(ParamSet& params, std::size_t hidden, std::size_t heads, std::uint64_t seed);

/// TF1 + SF + TF2 parameters for `config`.
ParamSet init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Neighborhood index lists for `replicas` stacked copies of a graph: rows
/// are replica * n + node, and every (center, neighbor) pair is one edge of
/// the attention softmax.
struct GraphBatch {
    std::size_t rows = 0;
    std::vector<std::size_t> center;
    std::vector<std::size_t> neighbor;
};

GraphBatch make_graph_batch(const TrafficGraph& graph, std::size_t replicas);

// --- Tape-level building blocks -------------------------------------------

/// One GRU step over a block of rows: x is rows x d, h is rows x d'.
Var gru_cell(Tape& tape, Var x, Var h, const ParamVars& params, std::string_view prefix);

/// Runs the GRU from a zero state; returns every hidden state.
std::vector<Var> gru_sequence(Tape& tape, std::span<const Var> inputs, const ParamVars& params,
                              std::string_view prefix);

/// e_ij = LeakyReLU(a^T [W z_i || W z_j]) for each edge of `graph`, as an E x 1 column.
Var attention_scores(Tape& tape, Var z, const GraphBatch& graph, const ParamVars& params, std::size_t head,
                     double slope);

/// Softmax of the scores over each node's neighborhood.
Var attention_normalize(Tape& tape, Var scores, const GraphBatch& graph);

/// ELU((1/K) sum_k sum_j alpha^k_ij W^k z_j).
Var attention_aggregate(Tape& tape, Var z, std::span<const Var> alphas, const GraphBatch& graph,
                        const ParamVars& params);

/// Scores, normalization and aggregation over all configured heads.
Var spatial_encode(Tape& tape, Var z, const GraphBatch& graph, const ParamVars& params,
                   const EncoderConfig& config);

/// The full sandwich over a window batch. Output rows are window * n + node.
Var st_embed(Tape& tape, const WindowBatch& windows, const TrafficGraph& graph, const ParamVars& params,
             const EncoderConfig& config);

/// Per-step input blocks ((B*n) x 1 each) for the temporal extractor.
std::vector<DenseArray> window_inputs(const WindowBatch& windows);

// --- Value-level operations -----------------------------------------------

/// x: rows x d, h_prev: rows x d'.
DenseArray gru_cell(const DenseArray& x, const DenseArray& h_prev, const ParamSet& params, std::string_view prefix);

/// Final GRU state per node; `sequence` holds H blocks of n x d.
StEmbedding gru_encode(std::span<const DenseArray> sequence, const ParamSet& params, std::string_view prefix);

/// Scores keyed like GraphBatch edges (E values, edge order of make_graph_batch(graph, 1)).
std::vector<double> attention_scores(const StEmbedding& z, const TrafficGraph& graph, std::size_t head,
                                     const ParamSet& params, double slope = 0.2);
std::vector<double> attention_normalize(std::span<const double> scores, const TrafficGraph& graph);
StEmbedding attention_aggregate(const StEmbedding& z, std::span<const std::vector<double>> alphas,
                                const TrafficGraph& graph, const ParamSet& params);

StEmbedding st_embed(const WindowBatch& windows, const TrafficGraph& graph, const ParamSet& params,
                     const EncoderConfig& config);

} // namespace stda

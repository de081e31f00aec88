#include <stda/errors.hpp>
#include <stda/st_embedding.hpp>

#include <array>
#include <cmath>
#include <random>

namespace stda {

namespace {

DenseArray uniform_init(Shape shape, double bound, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseArray out(std::move(shape));
    for (auto& v : out.data())
        v = dist(rng);
    return out;
}

std::string join(std::string_view prefix, std::string_view name)
{
    std::string out(prefix);
    out += '.';
    out += name;
    return out;
}

} // namespace

std::string gat_weight_name(std::size_t head) { return "sf.W" + std::to_string(head); }
std::string gat_attention_name(std::size_t head) { return "sf.a" + std::to_string(head); }

void init_gru_params(ParamSet& params, std::string_view prefix, std::size_t input_dim, std::size_t hidden,
                     std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const double in_bound = std::sqrt(1.0 / static_cast<double>(input_dim));
    const double h_bound = std::sqrt(1.0 / static_cast<double>(hidden));
    for (const char* g : {"W_ir", "W_iz", "W_in"})
        params.add(join(prefix, g), uniform_init({input_dim, hidden}, in_bound, rng));
    for (const char* g : {"W_hr", "W_hz", "W_hn"})
        params.add(join(prefix, g), uniform_init({hidden, hidden}, h_bound, rng));
    for (const char* g : {"b_ir", "b_iz", "b_in", "b_hr", "b_hz", "b_hn"})
        params.add(join(prefix, g), uniform_init({1, hidden}, h_bound, rng));
}

void init_gat_params(ParamSet& params, std::size_t hidden, std::size_t heads, std::uint64_t seed)
{
    if (heads == 0)
        throw ContractError("init_gat_params: need at least one head");
    std::mt19937_64 rng(seed);
    const double w_bound = std::sqrt(1.0 / static_cast<double>(hidden));
    const double a_bound = std::sqrt(1.0 / static_cast<double>(2 * hidden));
    for (std::size_t k = 0; k < heads; ++k) {
        params.add(gat_weight_name(k), uniform_init({hidden, hidden}, w_bound, rng));
        params.add(gat_attention_name(k), uniform_init({2 * hidden, 1}, a_bound, rng));
    }
}

ParamSet init_encoder(const EncoderConfig& config, std::uint64_t seed)
{
    if (config.hidden == 0 || config.input_dim == 0)
        throw ContractError("init_encoder: dimensions must be positive");
    ParamSet params;
    init_gru_params(params, kTemporalIn, config.input_dim, config.hidden, seed * 3 + 1);
    init_gat_params(params, config.hidden, config.heads, seed * 3 + 2);
    init_gru_params(params, kTemporalOut, config.hidden, config.hidden, seed * 3 + 3);
    return params;
}

GraphBatch make_graph_batch(const TrafficGraph& graph, std::size_t replicas)
{
    const auto n = graph.n_nodes();
    const auto& off = graph.neighbor_offsets();
    const auto& nb = graph.neighbor_index();
    GraphBatch out;
    out.rows = n * replicas;
    out.center.reserve(nb.size() * replicas);
    out.neighbor.reserve(nb.size() * replicas);
    for (std::size_t r = 0; r < replicas; ++r) {
        const auto base = r * n;
        for (std::size_t i = 0; i < n; ++i) {
            if (off[i] == off[i + 1])
                throw Error("make_graph_batch: node " + std::to_string(i) + " has an empty neighborhood");
            for (auto k = off[i]; k < off[i + 1]; ++k) {
                out.center.push_back(base + i);
                out.neighbor.push_back(base + nb[k]);
            }
        }
    }
    return out;
}

// --- Tape level ------------------------------------------------------------

namespace {

// Gate weights of one GRU laid side by side as [r | z | n].
struct FusedGru {
    Var w_i, w_h, b_i, b_h;
    std::size_t hidden = 0;
};

FusedGru fuse_gru(Tape& tape, const ParamVars& p, std::string_view prefix)
{
    auto cat = [&](const char* r, const char* z, const char* n) {
        const std::array<Var, 3> parts{p[join(prefix, r)], p[join(prefix, z)], p[join(prefix, n)]};
        return tape.concat_cols(parts);
    };
    return FusedGru{cat("W_ir", "W_iz", "W_in"), cat("W_hr", "W_hz", "W_hn"), cat("b_ir", "b_iz", "b_in"),
                    cat("b_hr", "b_hz", "b_hn"), p[join(prefix, "W_hr")].value().rows()};
}

Var gru_step(Tape& tape, Var x, Var h, const FusedGru& g)
{
    const auto d = g.hidden;
    Var xi = tape.matmul(x, g.w_i) + g.b_i;
    Var hh = tape.matmul(h, g.w_h) + g.b_h;
    Var r = tape.sigmoid(tape.slice_cols(xi, 0, d) + tape.slice_cols(hh, 0, d));
    Var z = tape.sigmoid(tape.slice_cols(xi, d, d) + tape.slice_cols(hh, d, d));
    Var n = tape.tanh(tape.slice_cols(xi, 2 * d, d) + r * tape.slice_cols(hh, 2 * d, d));
    Var one_minus_z = tape.add_scalar(tape.scale(z, -1.0), 1.0);
    return one_minus_z * n + z * h;
}

Var head_scores(Tape& tape, Var wz, Var a, const GraphBatch& graph, double slope)
{
    const auto width = wz.cols();
    Var left = tape.matmul(wz, tape.slice_rows(a, 0, width));
    Var right = tape.matmul(wz, tape.slice_rows(a, width, width));
    Var e = tape.gather_rows(left, graph.center) + tape.gather_rows(right, graph.neighbor);
    return tape.leaky_relu(e, slope);
}

Var average_heads(Tape& tape, std::span<const Var> wz, std::span<const Var> alphas, const GraphBatch& graph)
{
    Var total;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        Var agg = tape.edge_aggregate(wz[k], alphas[k], graph.neighbor, graph.center, graph.rows);
        total = k == 0 ? agg : total + agg;
    }
    return tape.elu(tape.scale(total, 1.0 / static_cast<double>(alphas.size())));
}

} // namespace

Var gru_cell(Tape& tape, Var x, Var h, const ParamVars& p, std::string_view prefix)
{
    return gru_step(tape, x, h, fuse_gru(tape, p, prefix));
}

std::vector<Var> gru_sequence(Tape& tape, std::span<const Var> inputs, const ParamVars& params,
                              std::string_view prefix)
{
    if (inputs.empty())
        throw ContractError("gru_sequence: empty sequence");
    const auto g = fuse_gru(tape, params, prefix);
    Var h = tape.constant(DenseArray::matrix(inputs.front().rows(), g.hidden));
    std::vector<Var> states;
    states.reserve(inputs.size());
    for (auto x : inputs) {
        h = gru_step(tape, x, h, g);
        states.push_back(h);
    }
    return states;
}

Var attention_scores(Tape& tape, Var z, const GraphBatch& graph, const ParamVars& params, std::size_t head,
                     double slope)
{
    if (z.rows() != graph.rows)
        throw ContractError("attention_scores: embedding rows differ from graph rows");
    Var wz = tape.matmul(z, params[gat_weight_name(head)]);
    return head_scores(tape, wz, params[gat_attention_name(head)], graph, slope);
}

Var attention_normalize(Tape& tape, Var scores, const GraphBatch& graph)
{
    return tape.segment_softmax(scores, graph.center, graph.rows);
}

Var attention_aggregate(Tape& tape, Var z, std::span<const Var> alphas, const GraphBatch& graph,
                        const ParamVars& params)
{
    if (alphas.empty())
        throw ContractError("attention_aggregate: no heads");
    std::vector<Var> wz;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        if (!params.contains(gat_weight_name(k)))
            throw ContractError("attention_aggregate: head count exceeds configured heads");
        wz.push_back(tape.matmul(z, params[gat_weight_name(k)]));
    }
    return average_heads(tape, wz, alphas, graph);
}

Var spatial_encode(Tape& tape, Var z, const GraphBatch& graph, const ParamVars& params,
                   const EncoderConfig& config)
{
    if (z.rows() != graph.rows)
        throw ContractError("spatial_encode: embedding rows differ from graph rows");
    std::vector<Var> wz, alphas;
    for (std::size_t k = 0; k < config.heads; ++k) {
        wz.push_back(tape.matmul(z, params[gat_weight_name(k)]));
        alphas.push_back(attention_normalize(
            tape, head_scores(tape, wz.back(), params[gat_attention_name(k)], graph, config.leaky_slope), graph));
    }
    return average_heads(tape, wz, alphas, graph);
}

std::vector<DenseArray> window_inputs(const WindowBatch& windows)
{
    const auto b = windows.size(), n = windows.n_nodes;
    std::vector<DenseArray> steps;
    steps.reserve(windows.history);
    for (std::size_t t = 0; t < windows.history; ++t) {
        DenseArray x = DenseArray::matrix(b * n, 1);
        for (std::size_t k = 0; k < b; ++k)
            for (std::size_t i = 0; i < n; ++i)
                x[k * n + i] = windows.input(k, t, i);
        steps.push_back(std::move(x));
    }
    return steps;
}

Var st_embed(Tape& tape, const WindowBatch& windows, const TrafficGraph& graph, const ParamVars& params,
             const EncoderConfig& config)
{
    if (config.input_dim != 1)
        throw ContractError("st_embed: window batches carry one feature per node");
    if (windows.n_nodes != graph.n_nodes())
        throw ContractError("st_embed: window batch has " + std::to_string(windows.n_nodes) + " nodes, graph has "
                            + std::to_string(graph.n_nodes()));
    if (windows.empty() || windows.history == 0)
        throw ContractError("st_embed: empty window batch");
    const auto b = windows.size();
    const auto block = b * graph.n_nodes();

    std::vector<Var> xs;
    for (auto& x : window_inputs(windows))
        xs.push_back(tape.constant(std::move(x)));
    auto temporal = gru_sequence(tape, xs, params, kTemporalIn);

    std::vector<Var> spatial;
    if (config.mode == SandwichMode::Sequence) {
        const auto gb = make_graph_batch(graph, b * windows.history);
        Var stacked = tape.concat_rows(temporal);
        Var zsp = spatial_encode(tape, stacked, gb, params, config);
        for (std::size_t t = 0; t < windows.history; ++t)
            spatial.push_back(tape.slice_rows(zsp, t * block, block));
    } else {
        const auto gb = make_graph_batch(graph, b);
        spatial.push_back(spatial_encode(tape, temporal.back(), gb, params, config));
    }
    return gru_sequence(tape, spatial, params, kTemporalOut).back();
}

// --- Value level -----------------------------------------------------------

DenseArray gru_cell(const DenseArray& x, const DenseArray& h_prev, const ParamSet& params, std::string_view prefix)
{
    Tape tape;
    auto p = tape.bind_constant(params);
    if (x.rows() != h_prev.rows() || x.cols() != p[join(prefix, "W_ir")].rows()
        || h_prev.cols() != p[join(prefix, "W_hr")].rows())
        throw ContractError("gru_cell: input shapes do not match parameters");
    return gru_cell(tape, tape.constant(x), tape.constant(h_prev), p, prefix).value();
}

StEmbedding gru_encode(std::span<const DenseArray> sequence, const ParamSet& params, std::string_view prefix)
{
    if (sequence.empty())
        throw ContractError("gru_encode: empty sequence");
    Tape tape;
    auto p = tape.bind_constant(params);
    std::vector<Var> xs;
    for (const auto& x : sequence)
        xs.push_back(tape.constant(x));
    return StEmbedding{gru_sequence(tape, xs, p, prefix).back().value(), EmbeddingStage::Temporal};
}

std::vector<double> attention_scores(const StEmbedding& z, const TrafficGraph& graph, std::size_t head,
                                     const ParamSet& params, double slope)
{
    if (z.stage == EmbeddingStage::SpatioTemporal)
        throw ContractError("attention_scores: expects a temporal or spatial embedding");
    Tape tape;
    auto p = tape.bind_constant(params);
    const auto gb = make_graph_batch(graph, 1);
    return attention_scores(tape, tape.constant(z.z), gb, p, head, slope).value().values();
}

std::vector<double> attention_normalize(std::span<const double> scores, const TrafficGraph& graph)
{
    Tape tape;
    const auto gb = make_graph_batch(graph, 1);
    if (scores.size() != gb.center.size())
        throw ContractError("attention_normalize: one score per neighborhood edge expected");
    Var e = tape.constant(DenseArray::column({scores.begin(), scores.end()}));
    return attention_normalize(tape, e, gb).value().values();
}

StEmbedding attention_aggregate(const StEmbedding& z, std::span<const std::vector<double>> alphas,
                                const TrafficGraph& graph, const ParamSet& params)
{
    Tape tape;
    auto p = tape.bind_constant(params);
    const auto gb = make_graph_batch(graph, 1);
    std::vector<Var> a;
    for (const auto& alpha : alphas) {
        if (alpha.size() != gb.center.size())
            throw ContractError("attention_aggregate: alpha length differs from edge count");
        a.push_back(tape.constant(DenseArray::column(alpha)));
    }
    return StEmbedding{attention_aggregate(tape, tape.constant(z.z), a, gb, p).value(), EmbeddingStage::Spatial};
}

StEmbedding st_embed(const WindowBatch& windows, const TrafficGraph& graph, const ParamSet& params,
                     const EncoderConfig& config)
{
    Tape tape;
    auto p = tape.bind_constant(params);
    return StEmbedding{st_embed(tape, windows, graph, p, config).value(), EmbeddingStage::SpatioTemporal};
}

} // namespace stda

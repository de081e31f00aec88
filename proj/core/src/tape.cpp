#include <stda/errors.hpp>
#include <stda/tape.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stda {

namespace {

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const DenseArray& a, const DenseArray& b, std::string_view op)
{
    const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    if (ar == br && ac == bc)
        return Broadcast::Same;
    if (br == 1 && bc == 1)
        return Broadcast::Scalar;
    if (br == 1 && bc == ac)
        return Broadcast::Row;
    if (bc == 1 && br == ar)
        return Broadcast::Col;
    throw ContractError(std::string(op) + ": cannot broadcast " + shape_to_string(b.shape()) + " against "
                        + shape_to_string(a.shape()));
}

// Calls f(i, j) for each flat output index i and its broadcast source index j.
template <class F>
inline void for_broadcast(Broadcast kind, std::size_t rows, std::size_t cols, F&& f)
{
    switch (kind) {
    case Broadcast::Same:
        for (std::size_t i = 0; i < rows * cols; ++i)
            f(i, i);
        break;
    case Broadcast::Row:
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                f(r * cols + c, c);
        break;
    case Broadcast::Col:
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                f(r * cols + c, r);
        break;
    case Broadcast::Scalar:
        for (std::size_t i = 0; i < rows * cols; ++i)
            f(i, 0);
        break;
    }
}

DenseArray matrix_like(const DenseArray& a)
{
    return DenseArray::matrix(a.rows(), a.cols());
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// C += A * B, all row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap(c, mi, ni).noalias() += ConstMap(a, mi, ki) * ConstMap(b, ki, ni);
}

// C += A * B^T where A is m x k and B is n x k.
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap(c, mi, ni).noalias() += ConstMap(a, mi, ki) * ConstMap(b, ni, ki).transpose();
}

// C += A^T * B where A is k x m and B is k x n.
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap(c, mi, ni).noalias() += ConstMap(a, ki, mi).transpose() * ConstMap(b, ki, ni);
}

template <class F>
DenseArray map_values(const DenseArray& a, F f)
{
    DenseArray out = matrix_like(a);
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = f(src[i]);
    return out;
}

} // namespace

// --- Var / ParamVars ------------------------------------------------------

const DenseArray& Var::value() const { return tape_->value(id_); }
const DenseArray& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var ParamVars::operator[](std::string_view name) const
{
    for (const auto& [n, v] : items_)
        if (n == name)
            return v;
    throw ContractError("ParamVars: unknown parameter '" + std::string(name) + "'");
}

bool ParamVars::contains(std::string_view name) const noexcept
{
    return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

// --- Tape plumbing ---------------------------------------------------------

Var Tape::push(DenseArray value, bool requires_grad, Backward backward, std::string_view op)
{
    if (!value.all_finite())
        throw NumericError("non-finite value produced by primitive '" + std::string(op) + "'");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad)
        node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v, std::string_view op) const
{
    if (v.tape() != this || v.id() >= nodes_.size())
        throw ContractError(std::string(op) + ": variable does not belong to this tape");
}

DenseArray& Tape::grad_buffer(std::size_t id)
{
    Node& n = nodes_[id];
    if (n.grad.empty())
        n.grad = DenseArray(n.value.shape(), 0.0);
    return n.grad;
}

Var Tape::constant(DenseArray value)
{
    return push(std::move(value), false, nullptr, "constant");
}

Var Tape::variable(DenseArray value)
{
    return push(std::move(value), true, [](Tape&, std::size_t) {}, "variable");
}

ParamVars Tape::bind(ParamSet& params, bool trainable)
{
    ParamVars out;
    out.items_.reserve(params.size());
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
        auto& e = params.entries()[i];
        Var v = trainable ? variable(e.value) : constant(e.value);
        if (trainable)
            bindings_.push_back(Binding{v.id(), &params, i});
        out.items_.emplace_back(e.name, v);
    }
    return out;
}

ParamVars Tape::bind_constant(const ParamSet& params)
{
    ParamVars out;
    out.items_.reserve(params.size());
    for (const auto& e : params.entries())
        out.items_.emplace_back(e.name, constant(e.value));
    return out;
}

void Tape::backward(Var loss)
{
    check_owner(loss, "backward");
    if (loss.value().size() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(loss.value().shape()));
    if (!nodes_[loss.id()].requires_grad)
        return;
    grad_buffer(loss.id())[0] += 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty() || !n.backward)
            continue;
        n.backward(*this, id);
    }
    for (const auto& b : bindings_) {
        const Node& n = nodes_[b.node];
        if (n.grad.empty())
            continue;
        auto& entry = b.params->entries()[b.entry];
        if (!entry.grad.same_shape(entry.value))
            entry.grad = DenseArray(entry.value.shape(), 0.0);
        auto dst = entry.grad.data();
        auto src = n.grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] += src[i];
    }
}

// --- Primitives ------------------------------------------------------------

Var Tape::matmul(Var a, Var b)
{
    check_owner(a, "matmul");
    check_owner(b, "matmul");
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k)
        throw ContractError("matmul: inner dimensions differ (" + shape_to_string(av.shape()) + " x "
                            + shape_to_string(bv.shape()) + ")");
    DenseArray out = DenseArray::matrix(m, n);
    gemm_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
    const std::size_t ia = a.id(), ib = b.id();
    return push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, m, k, n](Tape& t, std::size_t self) {
                    const double* g = t.nodes_[self].grad.data().data();
                    if (t.nodes_[ia].requires_grad) {
                        auto& ga = t.grad_buffer(ia);
                        gemm_nt_acc(g, t.nodes_[ib].value.data().data(), ga.data().data(), m, n, k);
                    }
                    if (t.nodes_[ib].requires_grad) {
                        auto& gb = t.grad_buffer(ib);
                        gemm_tn_acc(t.nodes_[ia].value.data().data(), g, gb.data().data(), m, k, n);
                    }
                },
                "matmul");
}

Var Tape::add(Var a, Var b)
{
    check_owner(a, "add");
    check_owner(b, "add");
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto kind = broadcast_kind(av, bv, "add");
    const auto rows = av.rows(), cols = av.cols();
    DenseArray out = matrix_like(av);
    for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { out[i] = av[i] + bv[j]; });
    const std::size_t ia = a.id(), ib = b.id();
    return push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, kind, rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    if (t.nodes_[ia].requires_grad) {
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i];
                    }
                    if (t.nodes_[ib].requires_grad) {
                        auto& gb = t.grad_buffer(ib);
                        for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { gb[j] += g[i]; });
                    }
                },
                "add");
}

Var Tape::sub(Var a, Var b)
{
    check_owner(a, "sub");
    check_owner(b, "sub");
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto kind = broadcast_kind(av, bv, "sub");
    const auto rows = av.rows(), cols = av.cols();
    DenseArray out = matrix_like(av);
    for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { out[i] = av[i] - bv[j]; });
    const std::size_t ia = a.id(), ib = b.id();
    return push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, kind, rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    if (t.nodes_[ia].requires_grad) {
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i];
                    }
                    if (t.nodes_[ib].requires_grad) {
                        auto& gb = t.grad_buffer(ib);
                        for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { gb[j] -= g[i]; });
                    }
                },
                "sub");
}

Var Tape::mul(Var a, Var b)
{
    check_owner(a, "mul");
    check_owner(b, "mul");
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto kind = broadcast_kind(av, bv, "mul");
    const auto rows = av.rows(), cols = av.cols();
    DenseArray out = matrix_like(av);
    for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { out[i] = av[i] * bv[j]; });
    const std::size_t ia = a.id(), ib = b.id();
    return push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib, kind, rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& av = t.nodes_[ia].value;
                    const auto& bv = t.nodes_[ib].value;
                    if (t.nodes_[ia].requires_grad) {
                        auto& ga = t.grad_buffer(ia);
                        for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { ga[i] += g[i] * bv[j]; });
                    }
                    if (t.nodes_[ib].requires_grad) {
                        auto& gb = t.grad_buffer(ib);
                        for_broadcast(kind, rows, cols, [&](std::size_t i, std::size_t j) { gb[j] += g[i] * av[i]; });
                    }
                },
                "mul");
}

Var Tape::scale(Var a, double factor)
{
    check_owner(a, "scale");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [factor](double x) { return x * factor; }), a.requires_grad(),
                [ia, factor](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += factor * g[i];
                },
                "scale");
}

Var Tape::add_scalar(Var a, double offset)
{
    check_owner(a, "add_scalar");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [offset](double x) { return x + offset; }), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i];
                },
                "add_scalar");
}

Var Tape::sigmoid(Var a)
{
    check_owner(a, "sigmoid");
    const std::size_t ia = a.id();
    auto out = map_values(a.value(), [](double x) {
        if (x >= 0.0)
            return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    return push(std::move(out), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& y = t.nodes_[self].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                },
                "sigmoid");
}

Var Tape::tanh(Var a)
{
    check_owner(a, "tanh");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [](double x) { return std::tanh(x); }), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& y = t.nodes_[self].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                },
                "tanh");
}

Var Tape::leaky_relu(Var a, double slope)
{
    check_owner(a, "leaky_relu");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; }), a.requires_grad(),
                [ia, slope](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& x = t.nodes_[ia].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += x[i] > 0.0 ? g[i] : slope * g[i];
                },
                "leaky_relu");
}

Var Tape::elu(Var a, double alpha)
{
    check_owner(a, "elu");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); }),
                a.requires_grad(),
                [ia, alpha](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& x = t.nodes_[ia].value;
                    const auto& y = t.nodes_[self].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += x[i] > 0.0 ? g[i] : g[i] * (y[i] + alpha);
                },
                "elu");
}

Var Tape::log(Var a)
{
    check_owner(a, "log");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [](double x) { return std::log(x); }), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& x = t.nodes_[ia].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] / x[i];
                },
                "log");
}

Var Tape::square(Var a)
{
    check_owner(a, "square");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [](double x) { return x * x; }), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& x = t.nodes_[ia].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += 2.0 * x[i] * g[i];
                },
                "square");
}

Var Tape::sqrt(Var a)
{
    check_owner(a, "sqrt");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [](double x) { return std::sqrt(x); }), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& y = t.nodes_[self].value;
                    auto& ga = t.grad_buffer(ia);
                    // sqrt is not differentiable at 0; take the zero subgradient.
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (y[i] > 0.0)
                            ga[i] += g[i] / (2.0 * y[i]);
                },
                "sqrt");
}

Var Tape::clamp(Var a, double lo, double hi)
{
    check_owner(a, "clamp");
    if (!(lo <= hi))
        throw ContractError("clamp: lo > hi");
    const std::size_t ia = a.id();
    return push(map_values(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }), a.requires_grad(),
                [ia, lo, hi](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& x = t.nodes_[ia].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (x[i] >= lo && x[i] <= hi)
                            ga[i] += g[i];
                },
                "clamp");
}

Var Tape::sum(Var a)
{
    check_owner(a, "sum");
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    const std::size_t ia = a.id();
    return push(DenseArray::scalar(s), a.requires_grad(),
                [ia](Tape& t, std::size_t self) {
                    const double g = t.nodes_[self].grad[0];
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i)
                        ga[i] += g;
                },
                "sum");
}

Var Tape::mean(Var a)
{
    check_owner(a, "mean");
    const auto n = static_cast<double>(a.value().size());
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    const std::size_t ia = a.id();
    return push(DenseArray::scalar(s / n), a.requires_grad(),
                [ia, n](Tape& t, std::size_t self) {
                    const double g = t.nodes_[self].grad[0] / n;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i)
                        ga[i] += g;
                },
                "mean");
}

Var Tape::softmax_rows(Var a)
{
    check_owner(a, "softmax_rows");
    const auto& av = a.value();
    const auto rows = av.rows(), cols = av.cols();
    DenseArray out = matrix_like(av);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c)
            mx = std::max(mx, av[r * cols + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = std::exp(av[r * cols + c] - mx);
            z += out[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] /= z;
    }
    const std::size_t ia = a.id();
    return push(std::move(out), a.requires_grad(),
                [ia, rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& y = t.nodes_[self].value;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < cols; ++c)
                            dot += g[r * cols + c] * y[r * cols + c];
                        for (std::size_t c = 0; c < cols; ++c)
                            ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
                    }
                },
                "softmax_rows");
}

Var Tape::segment_softmax(Var a, std::span<const std::size_t> segment, std::size_t n_segments)
{
    check_owner(a, "segment_softmax");
    const auto& av = a.value();
    if (av.cols() != 1 || av.rows() != segment.size())
        throw ContractError("segment_softmax: expected an Ex1 column matching the segment list");
    std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < segment.size(); ++e) {
        if (segment[e] >= n_segments)
            throw ContractError("segment_softmax: segment id out of range");
        mx[segment[e]] = std::max(mx[segment[e]], av[e]);
    }
    std::vector<double> z(n_segments, 0.0);
    DenseArray out = matrix_like(av);
    for (std::size_t e = 0; e < segment.size(); ++e) {
        out[e] = std::exp(av[e] - mx[segment[e]]);
        z[segment[e]] += out[e];
    }
    for (std::size_t e = 0; e < segment.size(); ++e)
        out[e] /= z[segment[e]];
    const std::size_t ia = a.id();
    std::vector<std::size_t> seg(segment.begin(), segment.end());
    return push(std::move(out), a.requires_grad(),
                [ia, seg = std::move(seg), n_segments](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    const auto& y = t.nodes_[self].value;
                    std::vector<double> dot(n_segments, 0.0);
                    for (std::size_t e = 0; e < seg.size(); ++e)
                        dot[seg[e]] += g[e] * y[e];
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t e = 0; e < seg.size(); ++e)
                        ga[e] += y[e] * (g[e] - dot[seg[e]]);
                },
                "segment_softmax");
}

Var Tape::concat_rows(std::span<const Var> parts)
{
    if (parts.empty())
        throw ContractError("concat_rows: no inputs");
    const auto cols = parts.front().value().cols();
    std::size_t rows = 0;
    bool needs = false;
    for (auto p : parts) {
        check_owner(p, "concat_rows");
        if (p.value().cols() != cols)
            throw ContractError("concat_rows: column counts differ");
        rows += p.value().rows();
        needs = needs || p.requires_grad();
    }
    DenseArray out = DenseArray::matrix(rows, cols);
    std::vector<std::size_t> ids;
    std::size_t off = 0;
    for (auto p : parts) {
        auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += src.size();
        ids.push_back(p.id());
    }
    return push(std::move(out), needs,
                [ids = std::move(ids)](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    std::size_t off = 0;
                    for (auto id : ids) {
                        const auto n = t.nodes_[id].value.size();
                        if (t.nodes_[id].requires_grad) {
                            auto& gi = t.grad_buffer(id);
                            for (std::size_t i = 0; i < n; ++i)
                                gi[i] += g[off + i];
                        }
                        off += n;
                    }
                },
                "concat_rows");
}

Var Tape::concat_cols(std::span<const Var> parts)
{
    if (parts.empty())
        throw ContractError("concat_cols: no inputs");
    const auto rows = parts.front().value().rows();
    std::size_t cols = 0;
    bool needs = false;
    for (auto p : parts) {
        check_owner(p, "concat_cols");
        if (p.value().rows() != rows)
            throw ContractError("concat_cols: row counts differ");
        cols += p.value().cols();
        needs = needs || p.requires_grad();
    }
    DenseArray out = DenseArray::matrix(rows, cols);
    std::vector<std::size_t> ids;
    std::size_t coff = 0;
    for (auto p : parts) {
        const auto& v = p.value();
        const auto pc = v.cols();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pc; ++c)
                out[r * cols + coff + c] = v[r * pc + c];
        coff += pc;
        ids.push_back(p.id());
    }
    return push(std::move(out), needs,
                [ids = std::move(ids), rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    std::size_t coff = 0;
                    for (auto id : ids) {
                        const auto pc = t.nodes_[id].value.cols();
                        if (t.nodes_[id].requires_grad) {
                            auto& gi = t.grad_buffer(id);
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < pc; ++c)
                                    gi[r * pc + c] += g[r * cols + coff + c];
                        }
                        coff += pc;
                    }
                },
                "concat_cols");
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count)
{
    check_owner(a, "slice_rows");
    const auto& av = a.value();
    const auto cols = av.cols();
    if (count == 0 || begin + count > av.rows())
        throw ContractError("slice_rows: range out of bounds");
    auto first = av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols);
    DenseArray out = DenseArray::matrix(count, cols, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols)));
    const std::size_t ia = a.id();
    return push(std::move(out), a.requires_grad(),
                [ia, begin, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    const auto off = begin * cols;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[off + i] += g[i];
                },
                "slice_rows");
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count)
{
    check_owner(a, "slice_cols");
    const auto& av = a.value();
    const auto rows = av.rows(), cols = av.cols();
    if (count == 0 || begin + count > cols)
        throw ContractError("slice_cols: range out of bounds");
    DenseArray out = DenseArray::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c)
            out[r * count + c] = av[r * cols + begin + c];
    const std::size_t ia = a.id();
    return push(std::move(out), a.requires_grad(),
                [ia, begin, count, rows, cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < count; ++c)
                            ga[r * cols + begin + c] += g[r * count + c];
                },
                "slice_cols");
}

Var Tape::gather_rows(Var a, std::span<const std::size_t> index)
{
    check_owner(a, "gather_rows");
    const auto& av = a.value();
    const auto rows = av.rows(), cols = av.cols();
    if (index.empty())
        throw ContractError("gather_rows: empty index");
    DenseArray out = DenseArray::matrix(index.size(), cols);
    for (std::size_t e = 0; e < index.size(); ++e) {
        if (index[e] >= rows)
            throw ContractError("gather_rows: index out of range");
        std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(index[e] * cols), cols,
                    out.data().begin() + static_cast<std::ptrdiff_t>(e * cols));
    }
    const std::size_t ia = a.id();
    std::vector<std::size_t> idx(index.begin(), index.end());
    return push(std::move(out), a.requires_grad(),
                [ia, idx = std::move(idx), cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t e = 0; e < idx.size(); ++e)
                        for (std::size_t c = 0; c < cols; ++c)
                            ga[idx[e] * cols + c] += g[e * cols + c];
                },
                "gather_rows");
}

Var Tape::scatter_add_rows(Var a, std::span<const std::size_t> index, std::size_t n_out)
{
    check_owner(a, "scatter_add_rows");
    const auto& av = a.value();
    const auto cols = av.cols();
    if (av.rows() != index.size())
        throw ContractError("scatter_add_rows: index length differs from row count");
    DenseArray out = DenseArray::matrix(n_out, cols);
    for (std::size_t e = 0; e < index.size(); ++e) {
        if (index[e] >= n_out)
            throw ContractError("scatter_add_rows: index out of range");
        for (std::size_t c = 0; c < cols; ++c)
            out[index[e] * cols + c] += av[e * cols + c];
    }
    const std::size_t ia = a.id();
    std::vector<std::size_t> idx(index.begin(), index.end());
    return push(std::move(out), a.requires_grad(),
                [ia, idx = std::move(idx), cols](Tape& t, std::size_t self) {
                    const auto& g = t.nodes_[self].grad;
                    auto& ga = t.grad_buffer(ia);
                    for (std::size_t e = 0; e < idx.size(); ++e)
                        for (std::size_t c = 0; c < cols; ++c)
                            ga[e * cols + c] += g[idx[e] * cols + c];
                },
                "scatter_add_rows");
}

Var Tape::edge_aggregate(Var a, Var weight, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                         std::size_t n_out)
{
    check_owner(a, "edge_aggregate");
    check_owner(weight, "edge_aggregate");
    const auto& av = a.value();
    const auto& wv = weight.value();
    const auto rows = av.rows(), cols = av.cols();
    if (src.size() != dst.size() || wv.rows() != src.size() || wv.cols() != 1)
        throw ContractError("edge_aggregate: weight must be an Ex1 column matching the index lists");
    DenseArray out = DenseArray::matrix(n_out, cols);
    for (std::size_t e = 0; e < src.size(); ++e) {
        if (src[e] >= rows || dst[e] >= n_out)
            throw ContractError("edge_aggregate: index out of range");
        const double w = wv[e];
        const double* from = av.data().data() + src[e] * cols;
        double* to = out.data().data() + dst[e] * cols;
        for (std::size_t c = 0; c < cols; ++c)
            to[c] += w * from[c];
    }
    const std::size_t ia = a.id(), iw = weight.id();
    std::vector<std::size_t> s_idx(src.begin(), src.end()), d_idx(dst.begin(), dst.end());
    return push(std::move(out), a.requires_grad() || weight.requires_grad(),
                [ia, iw, s_idx = std::move(s_idx), d_idx = std::move(d_idx), cols](Tape& t, std::size_t self) {
                    const double* g = t.nodes_[self].grad.data().data();
                    const double* av = t.nodes_[ia].value.data().data();
                    const double* wv = t.nodes_[iw].value.data().data();
                    if (t.nodes_[ia].requires_grad) {
                        double* ga = t.grad_buffer(ia).data().data();
                        for (std::size_t e = 0; e < s_idx.size(); ++e)
                            for (std::size_t c = 0; c < cols; ++c)
                                ga[s_idx[e] * cols + c] += wv[e] * g[d_idx[e] * cols + c];
                    }
                    if (t.nodes_[iw].requires_grad) {
                        double* gw = t.grad_buffer(iw).data().data();
                        for (std::size_t e = 0; e < s_idx.size(); ++e) {
                            double acc = 0.0;
                            for (std::size_t c = 0; c < cols; ++c)
                                acc += g[d_idx[e] * cols + c] * av[s_idx[e] * cols + c];
                            gw[e] += acc;
                        }
                    }
                },
                "edge_aggregate");
}

// --- Free functions --------------------------------------------------------

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }

double forward_and_grad(ParamSet& params, const Objective& f)
{
    Tape tape;
    auto vars = tape.bind(params, true);
    Var loss = f(tape, vars);
    if (loss.value().size() != 1)
        throw ContractError("forward_and_grad: objective is not scalar (shape "
                            + shape_to_string(loss.value().shape()) + ")");
    for (auto& e : params.entries())
        if (!e.grad.same_shape(e.value))
            e.grad = DenseArray(e.value.shape(), 0.0);
    tape.backward(loss);
    return loss.value()[0];
}

double evaluate(const ParamSet& params, const Objective& f)
{
    Tape tape;
    auto vars = tape.bind_constant(params);
    Var loss = f(tape, vars);
    if (loss.value().size() != 1)
        throw ContractError("evaluate: objective is not scalar");
    return loss.value()[0];
}

} // namespace stda

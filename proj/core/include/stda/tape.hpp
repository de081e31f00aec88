#pragma once

#include <stda/dense_array.hpp>
#include <stda/param_set.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stda {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const DenseArray& value() const;
    const DenseArray& grad() const;
    bool requires_grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Vars created by binding a ParamSet to a tape, addressable by name.
class ParamVars {
public:
    Var operator[](std::string_view name) const;
    bool contains(std::string_view name) const noexcept;
    const std::vector<std::pair<std::string, Var>>& items() const noexcept { return items_; }

private:
    friend class Tape;
    std::vector<std::pair<std::string, Var>> items_;
};

/// Reverse-mode recording of matrix-valued primitives.
///
/// Every primitive checks its output for NaN/Inf and throws NumericError
/// naming itself. Nodes whose inputs are all constants record no backward
/// step, so a tape over constant parameters is a plain forward evaluation.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(DenseArray value);
    Var variable(DenseArray value);

    /// One leaf per entry. Trainable leaves flush their gradients into the
    /// set (accumulating) when backward() finishes; the set must outlive the
    /// backward call.
    ParamVars bind(ParamSet& params, bool trainable = true);
    ParamVars bind_constant(const ParamSet& params);

    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    const DenseArray& value(std::size_t id) const { return nodes_[id].value; }
    const DenseArray& grad(std::size_t id) const { return nodes_[id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Primitives. Binary elementwise ops broadcast `b` when it is 1x1, 1xC
    // (row) or Rx1 (column) against an RxC `a`.
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var add_scalar(Var a, double offset);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var leaky_relu(Var a, double slope);
    Var elu(Var a, double alpha = 1.0);
    Var log(Var a);
    Var square(Var a);
    Var sqrt(Var a);
    Var clamp(Var a, double lo, double hi);
    Var sum(Var a);
    Var mean(Var a);
    Var softmax_rows(Var a);
    /// Softmax of an Ex1 column within groups given by `segment` (values in
    /// [0, n_segments)), using max subtraction per group.
    Var segment_softmax(Var a, std::span<const std::size_t> segment, std::size_t n_segments);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    Var slice_rows(Var a, std::size_t begin, std::size_t count);
    Var slice_cols(Var a, std::size_t begin, std::size_t count);
    Var gather_rows(Var a, std::span<const std::size_t> index);
    /// out[index[e]] += a[e]; output has n_out rows.
    Var scatter_add_rows(Var a, std::span<const std::size_t> index, std::size_t n_out);
    /// out[dst[e]] += weight[e] * a[src[e]] with `weight` an Ex1 column; the
    /// fused form of gather_rows, mul and scatter_add_rows.
    Var edge_aggregate(Var a, Var weight, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                       std::size_t n_out);

private:
    using Backward = std::function<void(Tape&, std::size_t)>;

    struct Node {
        DenseArray value;
        DenseArray grad;
        bool requires_grad = false;
        Backward backward;
    };

    struct Binding {
        std::size_t node;
        ParamSet* params;
        std::size_t entry;
    };

    Var push(DenseArray value, bool requires_grad, Backward backward, std::string_view op);
    DenseArray& grad_buffer(std::size_t id);
    Tape* self() noexcept { return this; }
    void check_owner(Var v, std::string_view op) const;

    std::vector<Node> nodes_;
    std::vector<Binding> bindings_;
};

// Operator sugar over the same-tape primitives.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

/// A scalar objective built on a tape from bound parameters.
using Objective = std::function<Var(Tape&, const ParamVars&)>;

/// Evaluates `f` with `params` bound as trainable leaves and accumulates
/// d(value)/d(param) into params' gradients (callers zero them first).
/// Throws ContractError when f does not return a 1x1 value.
double forward_and_grad(ParamSet& params, const Objective& f);

/// Evaluates `f` without recording gradients.
double evaluate(const ParamSet& params, const Objective& f);

} // namespace stda

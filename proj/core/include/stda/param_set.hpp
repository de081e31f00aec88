#pragma once

#include <stda/dense_array.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stda {

/// Ordered, named collection of trainable arrays with a gradient companion
/// for each entry. Iteration follows insertion order.
///
/// Gradients are allocated lazily: an entry has no gradient until
/// zero_grad() runs or a backward pass accumulates into it.
class ParamSet {
public:
    struct Entry {
        std::string name;
        DenseArray value;
        DenseArray grad; ///< empty until populated
    };

    ParamSet() = default;

    /// Adds a parameter; throws ContractError on a duplicate name.
    DenseArray& add(std::string name, DenseArray value);

    bool contains(std::string_view name) const noexcept;
    std::optional<std::size_t> index_of(std::string_view name) const noexcept;

    DenseArray& value(std::string_view name);
    const DenseArray& value(std::string_view name) const;
    DenseArray& grad(std::string_view name);
    const DenseArray& grad(std::string_view name) const;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t scalar_count() const noexcept;

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    /// Allocates (if needed) and zeroes every gradient.
    void zero_grad();
    /// True when every entry has a gradient of matching shape.
    bool grads_ready() const noexcept;

    /// Flattens values (or gradients) in entry order.
    std::vector<double> flat_values() const;
    std::vector<double> flat_grads() const;
    void set_flat_values(std::span<const double> flat);
    void set_flat_grads(std::span<const double> flat);

    /// True when names and shapes match entry for entry.
    bool same_layout(const ParamSet& other) const noexcept;

private:
    Entry& entry(std::string_view name);
    const Entry& entry(std::string_view name) const;

    std::vector<Entry> entries_;
};

/// Deep, independent copy (values and gradients).
ParamSet clone_params(const ParamSet& params);

} // namespace stda

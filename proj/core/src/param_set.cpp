#include <stda/errors.hpp>
#include <stda/param_set.hpp>

#include <algorithm>

namespace stda {

DenseArray& ParamSet::add(std::string name, DenseArray value)
{
    if (contains(name))
        throw ContractError("ParamSet: duplicate parameter name '" + name + "'");
    entries_.push_back(Entry{std::move(name), std::move(value), DenseArray{}});
    return entries_.back().value;
}

bool ParamSet::contains(std::string_view name) const noexcept
{
    return index_of(name).has_value();
}

std::optional<std::size_t> ParamSet::index_of(std::string_view name) const noexcept
{
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name == name)
            return i;
    return std::nullopt;
}

ParamSet::Entry& ParamSet::entry(std::string_view name)
{
    auto idx = index_of(name);
    if (!idx)
        throw ContractError("ParamSet: unknown parameter '" + std::string(name) + "'");
    return entries_[*idx];
}

const ParamSet::Entry& ParamSet::entry(std::string_view name) const
{
    auto idx = index_of(name);
    if (!idx)
        throw ContractError("ParamSet: unknown parameter '" + std::string(name) + "'");
    return entries_[*idx];
}

DenseArray& ParamSet::value(std::string_view name) { return entry(name).value; }
const DenseArray& ParamSet::value(std::string_view name) const { return entry(name).value; }
DenseArray& ParamSet::grad(std::string_view name) { return entry(name).grad; }
const DenseArray& ParamSet::grad(std::string_view name) const { return entry(name).grad; }

std::size_t ParamSet::scalar_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& e : entries_)
        n += e.value.size();
    return n;
}

void ParamSet::zero_grad()
{
    for (auto& e : entries_) {
        if (e.grad.same_shape(e.value))
            e.grad.fill(0.0);
        else
            e.grad = DenseArray(e.value.shape(), 0.0);
    }
}

bool ParamSet::grads_ready() const noexcept
{
    return std::all_of(entries_.begin(), entries_.end(),
                       [](const Entry& e) { return !e.grad.empty() && e.grad.same_shape(e.value); });
}

std::vector<double> ParamSet::flat_values() const
{
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries_)
        out.insert(out.end(), e.value.data().begin(), e.value.data().end());
    return out;
}

std::vector<double> ParamSet::flat_grads() const
{
    if (!grads_ready())
        throw ContractError("ParamSet::flat_grads: gradients not populated");
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries_)
        out.insert(out.end(), e.grad.data().begin(), e.grad.data().end());
    return out;
}

void ParamSet::set_flat_values(std::span<const double> flat)
{
    if (flat.size() != scalar_count())
        throw ContractError("ParamSet::set_flat_values: size mismatch");
    std::size_t off = 0;
    for (auto& e : entries_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), e.value.size(), e.value.data().begin());
        off += e.value.size();
    }
}

void ParamSet::set_flat_grads(std::span<const double> flat)
{
    if (flat.size() != scalar_count())
        throw ContractError("ParamSet::set_flat_grads: size mismatch");
    zero_grad();
    std::size_t off = 0;
    for (auto& e : entries_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), e.grad.size(), e.grad.data().begin());
        off += e.grad.size();
    }
}

bool ParamSet::same_layout(const ParamSet& other) const noexcept
{
    if (entries_.size() != other.entries_.size())
        return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name != other.entries_[i].name || !entries_[i].value.same_shape(other.entries_[i].value))
            return false;
    return true;
}

ParamSet clone_params(const ParamSet& params)
{
    return params;
}

} // namespace stda

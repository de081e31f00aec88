#include <stda/dense_array.hpp>
#include <stda/errors.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stda {

std::size_t shape_product(const Shape& shape) noexcept
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0)
            out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill)
{
    for (auto d : shape_)
        if (d == 0)
            throw ContractError("DenseArray: zero-sized dimension in shape " + shape_to_string(shape_));
}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    for (auto d : shape_)
        if (d == 0)
            throw ContractError("DenseArray: zero-sized dimension in shape " + shape_to_string(shape_));
    if (shape_product(shape_) != data_.size())
        throw ContractError("DenseArray: shape " + shape_to_string(shape_) + " does not hold "
                            + std::to_string(data_.size()) + " values");
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols, double fill)
{
    return DenseArray({rows, cols}, fill);
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
{
    return DenseArray({rows, cols}, std::move(data));
}

DenseArray DenseArray::row(std::vector<double> data)
{
    const auto n = data.size();
    return DenseArray({1, n}, std::move(data));
}

DenseArray DenseArray::column(std::vector<double> data)
{
    const auto n = data.size();
    return DenseArray({n, 1}, std::move(data));
}

DenseArray DenseArray::scalar(double value)
{
    return DenseArray({1, 1}, std::vector<double>{value});
}

double DenseArray::item() const
{
    if (data_.size() != 1)
        throw ContractError("DenseArray::item on array of shape " + shape_to_string(shape_));
    return data_[0];
}

bool DenseArray::all_finite() const noexcept
{
    // v * 0 is 0 for finite v and NaN otherwise; the sum vectorizes.
    double acc = 0.0;
    for (const double v : data_)
        acc += v * 0.0;
    return acc == 0.0;
}

void DenseArray::fill(double value) noexcept
{
    std::fill(data_.begin(), data_.end(), value);
}

} // namespace stda

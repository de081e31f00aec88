#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stda {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles.
///
/// Every array also has a matrix view used by the differentiable primitives:
/// rank 0 is 1x1, rank 1 is a 1xN row, rank 2 is itself, and higher ranks
/// fold the trailing dimensions into the column count.
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(Shape shape, double fill = 0.0);
    DenseArray(Shape shape, std::vector<double> data);

    static DenseArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static DenseArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static DenseArray row(std::vector<double> data);
    static DenseArray column(std::vector<double> data);
    static DenseArray scalar(double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept { return shape_.size() < 2 ? 1 : shape_[0]; }
    std::size_t cols() const noexcept
    {
        if (shape_.empty())
            return 1;
        return shape_.size() == 1 ? shape_[0] : data_.size() / shape_[0];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    /// Scalar value of a one-element array.
    double item() const;

    bool all_finite() const noexcept;
    void fill(double value) noexcept;

    bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }
    friend bool operator==(const DenseArray&, const DenseArray&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

} // namespace stda

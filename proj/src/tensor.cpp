#include "grasp/tensor.hpp"

#include "grasp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace grasp {

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (auto extent : shape)
        n *= extent;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

void check_extents(const Shape& shape)
{
    if (shape.empty())
        throw DimensionError("tensor shape must have at least one axis");
    for (auto extent : shape)
        if (extent == 0)
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
}

} // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    check_extents(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values))
{
    check_extents(shape_);
    if (data_.size() != shape_size(shape_))
        throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                             std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape(), 0.0); }

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    return shape_[axis];
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

bool bit_equal(const Tensor& a, const Tensor& b)
{
    return a.shape() == b.shape() &&
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace grasp

#include "hanmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace hanmt {

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError(
            fmt::format("tensor shape {} needs {} values, got {}", shape_str(shape_), shape_numel(shape_), data_.size()));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n_rows = rows.size();
    const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n_rows * n_cols);
    for (const auto& row : rows) {
        if (row.size() != n_cols) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({n_rows, n_cols}, std::move(data));
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw DimensionError(fmt::format("index of rank {} into tensor {}", index.size(), shape_str(shape_)));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= shape_[axis]) throw std::out_of_range(fmt::format("index {} out of range on axis {}", i, axis));
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return data_[flat];
}

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionError(fmt::format("item() on tensor {}", shape_str(shape_)));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw DimensionError(fmt::format("rows [{},{}) of tensor {}", begin, end, shape_str(shape_)));
    }
    const std::size_t stride = shape_numel(shape_) / std::max<std::size_t>(shape_[0], 1);
    Shape out_shape = shape_;
    out_shape[0] = end - begin;
    return Tensor(std::move(out_shape), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                            data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("compare {} with {}", shape_str(a.shape()), shape_str(b.shape())));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace hanmt

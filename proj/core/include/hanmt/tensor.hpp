#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hanmt {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid hyperparameters or inconsistent configuration.
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a NaN or Inf shows up where finite values are required.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Values stay in double precision everywhere; checkpoint storage narrows to
/// float32, which is why the optimizer keeps parameters float-representable.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::initializer_list<std::size_t> index) const;
    double item() const;

    Tensor reshaped(Shape shape) const;
    /// Copy of rows [begin, end) along axis 0.
    Tensor rows(std::size_t begin, std::size_t end) const;

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

   private:
    Shape shape_;
    std::vector<double> data_;
};

/// Largest elementwise |a-b|; throws DimensionError on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace hanmt

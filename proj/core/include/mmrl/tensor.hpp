#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmrl {

/// Dense N-dimensional array of doubles, row-major.
///
/// The empty shape {} denotes a scalar (one element). Data length always
/// equals the product of the extents; reshaping returns a new value with the
/// same element count.
class Tensor {
public:
    Tensor();  // scalar zero
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-2 access (row, col).
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    // Rank-4 access (n, c, h, w).
    double& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    double item() const;

    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// Throws ShapeError naming both shapes if they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

// Rank-2 helpers used by dataset slicing and the trainers. These operate on
// plain tensors; the autodiff ops live on the Tape.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end);
Tensor transposed(const Tensor& t);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

// Rows of a rank->=2 tensor gathered by index (axis 0), preserving trailing
// extents.
Tensor take_rows(const Tensor& t, std::span<const std::size_t> indices);

}  // namespace mmrl

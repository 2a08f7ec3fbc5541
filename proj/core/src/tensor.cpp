#include "mmrl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "mmrl/errors.hpp"

namespace mmrl {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw ValueError("tensor extents must be positive, got " + shape_string(shape_));
    }
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw ValueError("tensor extents must be positive, got " + shape_string(shape_));
    }
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_[0] = v;
    return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.data_.assign(t.data_.size(), v);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_product(new_shape) != size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(new_shape) +
                         ": element counts differ");
    }
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(context) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
}

namespace {

void require_rank2(const Tensor& t, const char* context) {
    if (t.ndim() != 2) {
        throw ShapeError(std::string(context) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

}  // namespace

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
    if (t.ndim() < 1 || begin >= end || end > t.extent(0)) {
        throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + shape_string(t.shape()));
    }
    std::vector<std::size_t> shape = t.shape();
    shape[0] = end - begin;
    const std::size_t row = t.size() / t.extent(0);
    std::vector<double> data(t.data() + begin * row, t.data() + end * row);
    return Tensor(std::move(shape), std::move(data));
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end) {
    require_rank2(t, "slice_cols");
    if (begin >= end || end > t.extent(1)) {
        throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + shape_string(t.shape()));
    }
    const std::size_t rows = t.extent(0);
    Tensor out({rows, end - begin});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = t(i, j);
    return out;
}

Tensor transposed(const Tensor& t) {
    require_rank2(t, "transpose");
    const std::size_t rows = t.extent(0), cols = t.extent(1);
    Tensor out({cols, rows});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out(j, i) = t(i, j);
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.extent(0) != b.extent(0)) {
        throw ShapeError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const std::size_t rows = a.extent(0), ca = a.extent(1), cb = b.extent(1);
    Tensor out({rows, ca + cb});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b(i, j);
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: inner extents differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const std::size_t p = a.extent(0), q = a.extent(1), r = b.extent(1);
    Tensor out({p, r});
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < r; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> indices) {
    if (t.ndim() < 1) throw ShapeError("take_rows: scalar input");
    std::vector<std::size_t> shape = t.shape();
    shape[0] = indices.size();
    const std::size_t row = t.size() / t.extent(0);
    std::vector<double> data;
    data.reserve(indices.size() * row);
    for (std::size_t idx : indices) {
        if (idx >= t.extent(0)) {
            throw ShapeError("take_rows: index " + std::to_string(idx) + " out of range for shape " +
                             shape_string(t.shape()));
        }
        data.insert(data.end(), t.data() + idx * row, t.data() + (idx + 1) * row);
    }
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace mmrl

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinnlab {

/// Error raised by tensor / graph operations (shape mismatch, non-finite
/// values, invalid arguments).
class TensorError : public std::runtime_error {
public:
    explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense real tensor of rank 0, 1 or 2, row-major storage, double precision.
///
/// Rank 0 is a scalar (shape {}), rank 1 a flat vector (shape {n}),
/// rank 2 a matrix (shape {rows, cols}). All graph math is double precision.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {
        if (shape_.size() > 2) throw TensorError("Tensor rank > 2 unsupported");
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_.size() > 2) throw TensorError("Tensor rank > 2 unsupported");
        if (data_.size() != count(shape_))
            throw TensorError("Tensor data length does not match shape");
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }
    /// Column vector [n x 1] from values.
    static Tensor column(std::span<const double> v) {
        Tensor t({v.size(), 1});
        std::copy(v.begin(), v.end(), t.data_.begin());
        return t;
    }
    /// Row vector [1 x n] from values.
    static Tensor row(std::span<const double> v) {
        Tensor t({1, v.size()});
        std::copy(v.begin(), v.end(), t.data_.begin());
        return t;
    }
    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 1 : shape_[0]); }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return {data_.data(), data_.size()}; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    /// Scalar payload of a rank-0 tensor.
    double item() const {
        if (!shape_.empty()) throw TensorError("item() on non-scalar tensor");
        return data_[0];
    }

    bool all_finite() const;
    /// Index of the first non-finite entry, or -1 if all finite.
    std::ptrdiff_t first_nonfinite() const;

    double norm2() const;
    double max_abs() const;

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        return n;
    }

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace pinnlab

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace earlyrec {

/// Dense vector of doubles.
class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    Vec(std::initializer_list<double> values) : data_(values) {}
    explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> view() noexcept { return data_; }
    std::span<const double> view() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool operator==(const Vec&) const = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix of doubles.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    /// Throws InvalidInput if `values.size() != rows * cols`.
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat identity(std::size_t n);
    static Mat zeros(std::size_t rows, std::size_t cols) { return Mat(rows, cols); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> view() noexcept { return data_; }
    std::span<const double> view() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool operator==(const Mat&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Weight matrix plus bias; maps cols -> rows.
struct AffineLayer {
    Mat weight;
    Vec bias;

    AffineLayer() = default;
    AffineLayer(std::size_t out, std::size_t in) : weight(out, in), bias(out) {}
    AffineLayer(Mat w, Vec b) : weight(std::move(w)), bias(std::move(b)) {}

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    bool operator==(const AffineLayer&) const = default;
};

/// Returns W x + b. Throws InvalidInput on any dimension mismatch.
Vec affine(const Mat& W, const Vec& x, const Vec& b);

/// Returns W^T v. Throws InvalidInput if `v.dim() != W.rows()`.
Vec transpose_times(const Mat& W, const Vec& v);

/// G += a b^T (unchecked; callers guarantee shapes).
void add_outer(Mat& G, std::span<const double> a, std::span<const double> b) noexcept;

inline Vec affine(const AffineLayer& layer, const Vec& x) {
    return affine(layer.weight, x, layer.bias);
}

/// Numerically stable softmax (max-subtracted). Throws InvalidInput on empty input.
Vec softmax(const Vec& z);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v) noexcept;

bool all_finite(std::span<const double> v) noexcept;

enum class Activation { sigmoid, tanh };

double activate(Activation kind, double x) noexcept;

/// d/dx of activate(kind, x).
double activate_derivative(Activation kind, double x) noexcept;

/// Derivative expressed through the already-computed activation value y.
double activate_derivative_from_value(Activation kind, double y) noexcept;

} // namespace earlyrec

#include "earlyrec/tensor.hpp"

#include "earlyrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace earlyrec {

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw InvalidInput("Mat: " + std::to_string(data_.size()) + " entries for shape " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw InvalidInput("Mat: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Vec affine(const Mat& W, const Vec& x, const Vec& b) {
    if (W.cols() != x.dim() || W.rows() != b.dim()) {
        throw InvalidInput("affine: W is " + std::to_string(W.rows()) + "x" +
                           std::to_string(W.cols()) + ", x has dim " + std::to_string(x.dim()) +
                           ", b has dim " + std::to_string(b.dim()));
    }
    Vec out(b);
    for (std::size_t r = 0; r < W.rows(); ++r) {
        const auto row = W.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
    return out;
}

Vec transpose_times(const Mat& W, const Vec& v) {
    if (v.dim() != W.rows()) {
        throw InvalidInput("transpose_times: W has " + std::to_string(W.rows()) +
                           " rows, v has dim " + std::to_string(v.dim()));
    }
    Vec out(W.cols());
    for (std::size_t r = 0; r < W.rows(); ++r) {
        const double s = v[r];
        if (s == 0.0) {
            continue;
        }
        const auto row = W.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            out[c] += row[c] * s;
        }
    }
    return out;
}

void add_outer(Mat& G, std::span<const double> a, std::span<const double> b) noexcept {
    for (std::size_t r = 0; r < a.size(); ++r) {
        const double s = a[r];
        if (s == 0.0) {
            continue;
        }
        auto row = G.row(r);
        for (std::size_t c = 0; c < b.size(); ++c) {
            row[c] += s * b[c];
        }
    }
}

Vec softmax(const Vec& z) {
    if (z.empty()) {
        throw InvalidInput("softmax: empty input");
    }
    const double m = *std::max_element(z.begin(), z.end());
    Vec out(z.dim());
    double total = 0.0;
    for (std::size_t i = 0; i < z.dim(); ++i) {
        out[i] = std::exp(z[i] - m);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

std::size_t argmax(std::span<const double> v) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

bool all_finite(std::span<const double> v) noexcept {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double activate(Activation kind, double x) noexcept {
    switch (kind) {
    case Activation::sigmoid:
        // Split by sign so exp never overflows.
        if (x >= 0.0) {
            return 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            return e / (1.0 + e);
        }
    case Activation::tanh:
        return std::tanh(x);
    }
    return 0.0;
}

double activate_derivative_from_value(Activation kind, double y) noexcept {
    switch (kind) {
    case Activation::sigmoid:
        return y * (1.0 - y);
    case Activation::tanh:
        return 1.0 - y * y;
    }
    return 0.0;
}

double activate_derivative(Activation kind, double x) noexcept {
    return activate_derivative_from_value(kind, activate(kind, x));
}

} // namespace earlyrec

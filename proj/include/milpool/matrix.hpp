#pragma once

// Dense row-major matrix of doubles and the handful of operations the
// network needs. Every operation returns a new matrix.

#include <milpool/error.hpp>
#include <milpool/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace milpool {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("buffer of " + std::to_string(data_.size()) +
                             " values does not fill " + shape_string(rows, cols));
    }
    /// Nested-list literal; every row must have the same length.
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    std::string shape() const { return shape_string(rows_, cols_); }
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    /// Rows [first, first + count) as a new matrix.
    Matrix slice_rows(std::size_t first, std::size_t count) const {
        if (first + count > rows_) throw ShapeError("row slice out of range for " + shape());
        return Matrix(count, cols_,
                      std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                                          data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_)));
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class Axis { rows, cols };

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

template <class F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <class F>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Matrix out(a.rows(), a.cols());
    auto x = a.values();
    auto y = b.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
}

} // namespace detail

// -- products ----------------------------------------------------------------

/// a * b. Loop order i-k-j; accumulation order over k is fixed.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    Matrix c(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c.row(i).data();
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

/// transpose(a) * b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: shape mismatch " + a.shape() + "^T x " + b.shape());
    const std::size_t n = a.cols(), p = b.cols();
    Matrix c(n, p);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k).data();
        const double* brow = b.row(k).data();
        for (std::size_t i = 0; i < n; ++i) {
            const double aki = arow[i];
            double* crow = c.row(i).data();
            for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

/// a * transpose(b) without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: shape mismatch " + a.shape() + " x " + b.shape() + "^T");
    const std::size_t n = a.rows(), p = b.rows(), m = a.cols();
    Matrix c(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = b.row(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += arow[k] * brow[k];
            c(i, j) = s;
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// -- elementwise ---------------------------------------------------------------

inline Matrix add(const Matrix& a, const Matrix& b) {
    return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
    return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}
/// Hadamard product.
inline Matrix mul(const Matrix& a, const Matrix& b) {
    return detail::zip(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Matrix add(const Matrix& a, double s) {
    return detail::map(a, [s](double x) { return x + s; });
}
inline Matrix mul(const Matrix& a, double s) {
    return detail::map(a, [s](double x) { return x * s; });
}
inline Matrix max_scalar(const Matrix& a, double s) {
    return detail::map(a, [s](double x) { return std::max(x, s); });
}

inline double sigmoid(double z) noexcept {
    // Split by sign so exp never overflows.
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}
// NaN passes through so corrupt inputs surface as a non-finite loss.
inline double relu(double z) noexcept { return z < 0.0 ? 0.0 : z; }

/// Floor applied inside log wherever it feeds the loss.
inline constexpr double kLogFloor = 1e-12;
inline double safe_log(double z) noexcept { return std::log(std::max(z, kLogFloor)); }

inline Matrix sigmoid(const Matrix& a) { return detail::map(a, [](double z) { return sigmoid(z); }); }
inline Matrix relu(const Matrix& a) { return detail::map(a, [](double z) { return relu(z); }); }
inline Matrix exp(const Matrix& a) { return detail::map(a, [](double z) { return std::exp(z); }); }
inline Matrix safe_log(const Matrix& a) { return detail::map(a, [](double z) { return safe_log(z); }); }

/// a + bias, where bias is 1 x a.cols() and is added to every row.
inline Matrix add_row_bias(const Matrix& a, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_row_bias: bias " + bias.shape() + " does not fit " + a.shape());
    Matrix out = a;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
    }
    return out;
}

// -- reductions ----------------------------------------------------------------

namespace detail {
inline void require_nonempty(const Matrix& a, const char* op) {
    if (a.empty()) throw DomainError(std::string(op) + ": empty matrix " + a.shape());
}
} // namespace detail

/// Axis::rows collapses the row axis (result 1 x cols); Axis::cols gives rows x 1.
inline Matrix sum(const Matrix& a, Axis axis) {
    detail::require_nonempty(a, "sum");
    if (axis == Axis::rows) {
        Matrix out(1, a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
        return out;
    }
    Matrix out(a.rows(), 1);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double x : a.row(i)) s += x;
        out(i, 0) = s;
    }
    return out;
}

inline Matrix mean(const Matrix& a, Axis axis) {
    Matrix s = sum(a, axis);
    const double n = static_cast<double>(axis == Axis::rows ? a.rows() : a.cols());
    return mul(s, 1.0 / n);
}

/// Index of the maximum along the axis; ties resolve to the lowest index.
inline std::vector<std::size_t> argmax(const Matrix& a, Axis axis) {
    detail::require_nonempty(a, "argmax");
    if (axis == Axis::rows) {
        std::vector<std::size_t> idx(a.cols(), 0);
        for (std::size_t i = 1; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j)
                if (a(i, j) > a(idx[j], j)) idx[j] = i;
        return idx;
    }
    std::vector<std::size_t> idx(a.rows(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 1; j < a.cols(); ++j)
            if (a(i, j) > a(i, idx[i])) idx[i] = j;
    return idx;
}

inline Matrix max(const Matrix& a, Axis axis) {
    const auto idx = argmax(a, axis);
    if (axis == Axis::rows) {
        Matrix out(1, a.cols());
        for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) = a(idx[j], j);
        return out;
    }
    Matrix out(a.rows(), 1);
    for (std::size_t i = 0; i < a.rows(); ++i) out(i, 0) = a(i, idx[i]);
    return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& a) {
    detail::require_nonempty(a, "softmax_rows");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto src = a.row(i);
        auto dst = out.row(i);
        const double m = *std::max_element(src.begin(), src.end());
        double s = 0.0;
        for (std::size_t j = 0; j < src.size(); ++j) {
            dst[j] = std::exp(src[j] - m);
            s += dst[j];
        }
        for (double& x : dst) x /= s;
    }
    return out;
}

// -- random matrices -----------------------------------------------------------

inline Matrix rng_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix out(rows, cols);
    for (double& x : out.values()) x = rng.uniform();
    return out;
}

inline Matrix rng_normal(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
    if (stddev < 0.0) throw DomainError("rng_normal: negative standard deviation");
    Matrix out(rows, cols);
    for (double& x : out.values()) x = rng.normal(mean, stddev);
    return out;
}

inline bool all_finite(const Matrix& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double x) { return std::isfinite(x); });
}

} // namespace milpool

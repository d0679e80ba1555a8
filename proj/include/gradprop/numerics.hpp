#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradprop {

/// Thrown on shape mismatches and undefined statistics (e.g. variance of a
/// single-sample batch).
class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
///
/// Used both for activation/gradient batches (rows = samples, cols = features)
/// and for weight matrices (rows = outputs, cols = inputs).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Builds a matrix from nested rows; all rows must have equal length.
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);

/// A batch of activations or gradients: rows are samples, columns features.
using Batch = Matrix;

/// Returns x · Wᵀ, i.e. applies W (n_out × n_in) to every sample row of x.
Matrix matmul_transposed_rhs(const Matrix& x, const Matrix& w);
/// Returns a · b.
Matrix matmul(const Matrix& a, const Matrix& b);
/// Returns aᵀ · b (sum over the shared row index).
Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b);

/// Per-feature arithmetic mean across the batch.
std::vector<double> batch_mean(const Batch& b);
/// Per-feature biased (divide-by-m) variance across the batch. Needs m >= 2.
std::vector<double> batch_var(const Batch& b);

/// Frobenius norm of the whole grid.
double l2_norm(const Matrix& m);
bool all_finite(const Matrix& m) noexcept;
bool all_finite(std::span<const double> v) noexcept;

double normal_pdf(double z) noexcept;
double normal_cdf(double z) noexcept;
/// Signed integral of the standard normal density from 0 to a (= Φ(a) − ½).
double p_of_a(double a) noexcept;

/// Adaptive Simpson quadrature of f over [lo, hi] to absolute tolerance tol.
double integrate_adaptive_simpson(const std::function<double(double)>& f, double lo, double hi,
                                  double tol, int max_depth = 50);

/// Counter-based 64-bit generator (SplitMix64 stepping). Identical seeds give
/// identical streams on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box–Muller; the paired variate is cached.
    double normal() noexcept;
    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;

    /// Derives an independent generator for a named sub-stream.
    SeededRng fork(std::uint64_t stream) const noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// In-place Fisher–Yates shuffle driven by rng.
void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) noexcept;

/// Batch of i.i.d. N(0, 1) entries.
Batch gaussian_batch(std::size_t rows, std::size_t cols, SeededRng& rng);

}  // namespace gradprop

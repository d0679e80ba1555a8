#include "gradprop/numerics.hpp"

#include <cmath>
#include <numbers>

namespace gradprop {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw NumericsError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()) + ")");
    }
}

// c[r, :] += s * src
inline void axpy(double s, std::span<const double> src, std::span<double> dst) noexcept {
    const std::size_t n = dst.size();
    const double* x = src.data();
    double* y = dst.data();
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

double simpson(double fa, double fm, double fb, double h) { return h / 6.0 * (fa + 4.0 * fm + fb); }

double adaptive_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                     double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(fa, flm, fm, m - a);
    const double right = simpson(fm, frm, fb, b - m);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw NumericsError("Matrix: data size does not match shape");
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw NumericsError("Matrix::from_rows: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    require_same_shape(*this, o, "Matrix::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    require_same_shape(*this, o, "Matrix::operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (auto& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }

// All three products accumulate each output element over the reduction index
// in ascending order, so results do not depend on vector width.
Matrix matmul_transposed_rhs(const Matrix& x, const Matrix& w) {
    if (x.cols() != w.cols()) throw NumericsError("matmul_transposed_rhs: inner dimension mismatch");
    const Matrix wt = w.transposed();
    Matrix y(x.rows(), w.rows());
    for (std::size_t b = 0; b < x.rows(); ++b) {
        auto out = y.row(b);
        const auto in = x.row(b);
        for (std::size_t i = 0; i < in.size(); ++i) axpy(in[i], wt.row(i), out);
    }
    return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw NumericsError("matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto out = c.row(r);
        const auto in = a.row(r);
        for (std::size_t k = 0; k < in.size(); ++k) axpy(in[k], b.row(k), out);
    }
    return c;
}

Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw NumericsError("matmul_transposed_lhs: row count mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto ar = a.row(r);
        const auto br = b.row(r);
        for (std::size_t k = 0; k < ar.size(); ++k) axpy(ar[k], br, c.row(k));
    }
    return c;
}

std::vector<double> batch_mean(const Batch& b) {
    if (b.rows() == 0) throw NumericsError("batch_mean: empty batch");
    std::vector<double> mean(b.cols(), 0.0);
    for (std::size_t r = 0; r < b.rows(); ++r) axpy(1.0, b.row(r), mean);
    const double inv = 1.0 / static_cast<double>(b.rows());
    for (auto& m : mean) m *= inv;
    return mean;
}

std::vector<double> batch_var(const Batch& b) {
    if (b.rows() < 2) throw NumericsError("batch_var: variance undefined for batch_size < 2");
    const auto mean = batch_mean(b);
    std::vector<double> var(b.cols(), 0.0);
    for (std::size_t r = 0; r < b.rows(); ++r) {
        const auto row = b.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    const double inv = 1.0 / static_cast<double>(b.rows());
    for (auto& v : var) v *= inv;
    return var;
}

double l2_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return std::sqrt(s);
}

bool all_finite(std::span<const double> v) noexcept {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) noexcept { return all_finite(m.values()); }

double normal_pdf(double z) noexcept {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// erf is odd in libm, which keeps p(a) + p(-a) == 0 exactly.
double p_of_a(double a) noexcept { return 0.5 * std::erf(a / std::numbers::sqrt2); }

double integrate_adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double tol,
                                  int max_depth) {
    if (hi == lo) return 0.0;
    if (hi < lo) return -integrate_adaptive_simpson(f, hi, lo, tol, max_depth);
    // Split into panels first so narrow features are not skipped by the
    // top-level error estimate.
    constexpr int panels = 16;
    const double h = (hi - lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * h;
        const double b = (p == panels - 1) ? hi : a + h;
        const double fa = f(a);
        const double fb = f(b);
        const double fm = f(0.5 * (a + b));
        total += adaptive_step(f, a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol / panels, max_depth);
    }
    return total;
}

std::uint64_t SeededRng::next_u64() noexcept {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SeededRng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

SeededRng SeededRng::fork(std::uint64_t stream) const noexcept {
    SeededRng mixer(seed_ ^ (stream * 0xD1B54A32D192ED03ULL));
    return SeededRng(mixer.next_u64());
}

void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) noexcept {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

Batch gaussian_batch(std::size_t rows, std::size_t cols, SeededRng& rng) {
    Batch b(rows, cols);
    for (double& v : b.values()) v = rng.normal();
    return b;
}

}  // namespace gradprop

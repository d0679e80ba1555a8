#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gradprop/numerics.hpp"

namespace gradprop::testing {

/// ‖a − b‖ / max(‖a‖, ‖b‖); 0 when both are zero.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

inline double relative_error(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Central differences of `loss` with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& loss,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Σ r ⊙ y, the scalar used to pull a gradient out of a batch-valued op.
inline double weighted_sum(const Matrix& y, const Matrix& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * r.values()[i];
    return s;
}

inline std::vector<double> to_vector(std::span<const double> v) { return {v.begin(), v.end()}; }

inline Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, SeededRng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("gradprop_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    return lines;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
}

}  // namespace gradprop::testing

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gradprop/numerics.hpp"

namespace gradprop {

/// Per-feature affine parameters of a batch-normalization sublayer.
struct BnParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    double epsilon = 1e-5;

    static BnParams identity(std::size_t features, double epsilon = 1e-5) {
        return {std::vector<double>(features, 1.0), std::vector<double>(features, 0.0), epsilon};
    }
    std::size_t features() const noexcept { return gamma.size(); }
};

struct BnCache {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;  // 1 / sqrt(var + eps)
    Batch xhat;
};

struct BnGrads {
    Batch dx;
    std::vector<double> dgamma;
    std::vector<double> dbeta;
};

std::pair<Batch, BnCache> bn_forward(const Batch& x, const BnParams& p);
BnGrads bn_backward(const Batch& dz, const BnCache& cache, const BnParams& p);

/// Records which entries were strictly positive on the forward pass.
struct ReluMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> active;

    bool operator()(std::size_t r, std::size_t c) const noexcept { return active[r * cols + c] != 0; }
    friend bool operator==(const ReluMask&, const ReluMask&) = default;
};

std::pair<Batch, ReluMask> relu_forward(const Batch& x);
Batch relu_backward(const Batch& dy, const ReluMask& mask);

/// Dense map y = W x per sample; W has shape (n_out, n_in).
struct DenseParams {
    Matrix weights;

    std::size_t n_out() const noexcept { return weights.rows(); }
    std::size_t n_in() const noexcept { return weights.cols(); }
};

struct DenseCache {
    Batch input;
};

struct DenseGrads {
    Batch dx;
    Matrix dw;
};

std::pair<Batch, DenseCache> dense_forward(const Batch& x, const DenseParams& w);
DenseGrads dense_backward(const Batch& dy, const DenseCache& cache, const DenseParams& w);

/// BN → ReLU → dense composite. The BN sublayer is absent in networks built
/// without normalization.
struct LayerParams {
    std::optional<BnParams> bn;
    DenseParams dense;

    std::size_t n_in() const noexcept { return dense.n_in(); }
    std::size_t n_out() const noexcept { return dense.n_out(); }
};

struct LayerCache {
    std::optional<BnCache> bn;
    ReluMask mask;
    DenseCache dense;
};

struct LayerGrads {
    Batch dx;
    std::optional<BnGrads> bn;  // dx omitted (moved into LayerGrads::dx)
    Matrix dw;
};

std::pair<Batch, LayerCache> layer_forward(const Batch& x, const LayerParams& p);
LayerGrads layer_backward(const Batch& dy, const LayerCache& cache, const LayerParams& p);

}  // namespace gradprop

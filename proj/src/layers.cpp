#include "gradprop/layers.hpp"

#include <cmath>
#include <string>

namespace gradprop {

namespace {

void check_features(const Batch& x, std::size_t features, const char* what) {
    if (x.cols() != features) {
        throw NumericsError(std::string(what) + ": expected " + std::to_string(features) + " features, got " +
                            std::to_string(x.cols()));
    }
}

}  // namespace

std::pair<Batch, BnCache> bn_forward(const Batch& x, const BnParams& p) {
    check_features(x, p.features(), "bn_forward");
    if (p.beta.size() != p.gamma.size()) throw NumericsError("bn_forward: gamma/beta size mismatch");
    if (!(p.epsilon > 0.0)) throw NumericsError("bn_forward: epsilon must be positive");

    BnCache cache;
    cache.mean = batch_mean(x);
    cache.var = batch_var(x);
    cache.inv_std.resize(cache.var.size());
    for (std::size_t c = 0; c < cache.var.size(); ++c) cache.inv_std[c] = 1.0 / std::sqrt(cache.var[c] + p.epsilon);

    cache.xhat = Batch(x.rows(), x.cols());
    Batch out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double xh = (x(r, c) - cache.mean[c]) * cache.inv_std[c];
            cache.xhat(r, c) = xh;
            out(r, c) = p.gamma[c] * xh + p.beta[c];
        }
    }
    return {std::move(out), std::move(cache)};
}

// dx = (γ / Std(x)) · ((dz − E(dz)) − x̂ · E(dz · x̂)), Std including ε.
BnGrads bn_backward(const Batch& dz, const BnCache& cache, const BnParams& p) {
    if (!dz.same_shape(cache.xhat)) throw NumericsError("bn_backward: gradient shape does not match cache");
    const std::size_t m = dz.rows();
    const std::size_t n = dz.cols();

    BnGrads g;
    g.dbeta.assign(n, 0.0);
    g.dgamma.assign(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            g.dbeta[c] += dz(r, c);
            g.dgamma[c] += dz(r, c) * cache.xhat(r, c);
        }
    }

    const double inv_m = 1.0 / static_cast<double>(m);
    g.dx = Batch(m, n);
    for (std::size_t c = 0; c < n; ++c) {
        const double mean_dz = g.dbeta[c] * inv_m;
        const double mean_dz_xhat = g.dgamma[c] * inv_m;
        const double scale = p.gamma[c] * cache.inv_std[c];
        for (std::size_t r = 0; r < m; ++r)
            g.dx(r, c) = scale * ((dz(r, c) - mean_dz) - cache.xhat(r, c) * mean_dz_xhat);
    }
    return g;
}

std::pair<Batch, ReluMask> relu_forward(const Batch& x) {
    Batch y(x.rows(), x.cols());
    ReluMask mask{x.rows(), x.cols(), std::vector<std::uint8_t>(x.size(), 0)};
    const auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] > 0.0) {
            out[i] = in[i];
            mask.active[i] = 1;
        }
    }
    return {std::move(y), std::move(mask)};
}

Batch relu_backward(const Batch& dy, const ReluMask& mask) {
    if (dy.rows() != mask.rows || dy.cols() != mask.cols) throw NumericsError("relu_backward: mask shape mismatch");
    Batch dx(dy.rows(), dy.cols());
    const auto in = dy.values();
    auto out = dx.values();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = mask.active[i] ? in[i] : 0.0;
    return dx;
}

std::pair<Batch, DenseCache> dense_forward(const Batch& x, const DenseParams& w) {
    check_features(x, w.n_in(), "dense_forward");
    return {matmul_transposed_rhs(x, w.weights), DenseCache{x}};
}

DenseGrads dense_backward(const Batch& dy, const DenseCache& cache, const DenseParams& w) {
    check_features(dy, w.n_out(), "dense_backward");
    if (dy.rows() != cache.input.rows()) throw NumericsError("dense_backward: batch size does not match cache");
    return {matmul(dy, w.weights), matmul_transposed_lhs(dy, cache.input)};
}

std::pair<Batch, LayerCache> layer_forward(const Batch& x, const LayerParams& p) {
    LayerCache cache;
    Batch pre;
    if (p.bn) {
        auto [z, bc] = bn_forward(x, *p.bn);
        pre = std::move(z);
        cache.bn = std::move(bc);
    } else {
        pre = x;
    }
    auto [act, mask] = relu_forward(pre);
    cache.mask = std::move(mask);
    auto [y, dc] = dense_forward(act, p.dense);
    cache.dense = std::move(dc);
    return {std::move(y), std::move(cache)};
}

LayerGrads layer_backward(const Batch& dy, const LayerCache& cache, const LayerParams& p) {
    LayerGrads g;
    auto dg = dense_backward(dy, cache.dense, p.dense);
    g.dw = std::move(dg.dw);
    Batch dpre = relu_backward(dg.dx, cache.mask);
    if (p.bn) {
        if (!cache.bn) throw NumericsError("layer_backward: cache lacks BN state");
        auto bg = bn_backward(dpre, *cache.bn, *p.bn);
        g.dx = std::move(bg.dx);
        g.bn = std::move(bg);
    } else {
        g.dx = std::move(dpre);
    }
    return g;
}

}  // namespace gradprop

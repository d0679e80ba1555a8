#include "gradprop/resnet.hpp"

#include <cmath>

namespace gradprop {

std::string_view variant_name(Variant v) noexcept {
    switch (v) {
        case Variant::BnResidual: return "bn_residual";
        case Variant::BnOnly: return "bn_only";
        case Variant::ResidualOnly: return "residual_only";
    }
    return "unknown";
}

Variant parse_variant(std::string_view text) {
    if (text == "1" || text == "bn_residual") return Variant::BnResidual;
    if (text == "2" || text == "bn_only") return Variant::BnOnly;
    if (text == "3" || text == "residual_only") return Variant::ResidualOnly;
    throw std::invalid_argument("unknown variant '" + std::string(text) + "' (expected 1, 2 or 3)");
}

void NetSpec::validate() const {
    if (scales.empty()) throw NumericsError("NetSpec: at least one scale is required");
    if (growth_k < 1) throw NumericsError("NetSpec: growth factor k must be positive");
    if (input_dim == 0 || num_classes < 2) throw NumericsError("NetSpec: input_dim > 0 and num_classes >= 2 required");
    if (!(init_scale > 0.0) || !(bn_epsilon > 0.0)) throw NumericsError("NetSpec: init_scale and bn_epsilon must be positive");
    for (std::size_t s = 0; s < scales.size(); ++s) {
        if (scales[s].blocks < 1) throw NumericsError("NetSpec: every scale needs at least one block");
        if (scales[s].width == 0) throw NumericsError("NetSpec: widths must be positive");
        if (s > 0 && scales[s].width != scales[s - 1].width * static_cast<std::size_t>(growth_k)) {
            throw NumericsError("NetSpec: width of scale " + std::to_string(s + 1) + " must be k x width of scale " +
                                std::to_string(s));
        }
    }
    if (scales.front().width % static_cast<std::size_t>(growth_k) != 0)
        throw NumericsError("NetSpec: width of the first scale must be divisible by k");
}

std::size_t NetSpec::num_blocks() const noexcept {
    std::size_t n = 0;
    for (const auto& s : scales) n += static_cast<std::size_t>(s.blocks);
    return n;
}

std::size_t NetSpec::stem_width() const { return scales.front().width / static_cast<std::size_t>(growth_k); }

std::vector<int> NetSpec::blocks_per_scale() const {
    std::vector<int> out;
    for (const auto& s : scales) out.push_back(s.blocks);
    return out;
}

NetSpec resnet15_spec(std::size_t input_dim, std::size_t num_classes, Variant variant) {
    NetSpec spec;
    spec.scales = {{5, 16}, {5, 32}, {5, 64}};
    spec.growth_k = 2;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    spec.variant = variant;
    return spec;
}

namespace {

Matrix xavier(std::size_t n_out, std::size_t n_in, double scale, SeededRng& rng) {
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(n_in + n_out));
    Matrix w(n_out, n_in);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    return w;
}

LayerParams make_layer(std::size_t n_in, std::size_t n_out, const NetSpec& spec, SeededRng& rng) {
    LayerParams p;
    if (spec.variant != Variant::ResidualOnly) p.bn = BnParams::identity(n_in, spec.bn_epsilon);
    p.dense.weights = xavier(n_out, n_in, spec.init_scale, rng);
    return p;
}

LayerParams zero_layer(const LayerParams& p) {
    LayerParams z;
    if (p.bn) {
        z.bn = BnParams{std::vector<double>(p.bn->features(), 0.0), std::vector<double>(p.bn->features(), 0.0),
                        p.bn->epsilon};
    }
    z.dense.weights = Matrix(p.dense.n_out(), p.dense.n_in());
    return z;
}

template <class LayerT, class Fn>
void visit_layer(const std::string& prefix, LayerT& layer, Fn&& fn) {
    if (layer.bn) {
        const TensorShape vec{1, layer.bn->gamma.size()};
        fn(prefix + ".bn.gamma", vec, std::span(layer.bn->gamma));
        fn(prefix + ".bn.beta", vec, std::span(layer.bn->beta));
    }
    const auto& w = layer.dense.weights;
    fn(prefix + ".dense.weights", TensorShape{w.rows(), w.cols()}, layer.dense.weights.values());
}

template <class ModelT, class Fn>
void visit_model(ModelT& m, Fn&& fn) {
    fn(std::string("stem.weights"), TensorShape{m.stem.weights.rows(), m.stem.weights.cols()}, m.stem.weights.values());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        auto& b = m.blocks[i];
        const std::string prefix = "block" + std::to_string(i + 1);
        if (b.shortcut) visit_layer(prefix + ".shortcut", *b.shortcut, fn);
        visit_layer(prefix + ".first", b.first, fn);
        visit_layer(prefix + ".second", b.second, fn);
    }
    visit_layer("head", m.head, fn);
}

}  // namespace

Model zeros_like(const Model& m) {
    Model z;
    z.spec = m.spec;
    z.stem.weights = Matrix(m.stem.weights.rows(), m.stem.weights.cols());
    z.blocks.reserve(m.blocks.size());
    for (const auto& b : m.blocks) {
        Block zb;
        zb.first = zero_layer(b.first);
        zb.second = zero_layer(b.second);
        if (b.shortcut) zb.shortcut = zero_layer(*b.shortcut);
        zb.scale_index = b.scale_index;
        zb.index_in_scale = b.index_in_scale;
        z.blocks.push_back(std::move(zb));
    }
    z.head = zero_layer(m.head);
    return z;
}

void for_each_tensor(Model& m, const std::function<void(const std::string&, TensorShape, std::span<double>)>& fn) {
    visit_model(m, fn);
}

void for_each_tensor(const Model& m,
                     const std::function<void(const std::string&, TensorShape, std::span<const double>)>& fn) {
    visit_model(m, [&](const std::string& name, TensorShape shape, auto span) {
        fn(name, shape, std::span<const double>(span));
    });
}

Model build_network(const NetSpec& spec, SeededRng& rng) {
    spec.validate();
    Model m;
    m.spec = spec;
    m.stem.weights = xavier(spec.stem_width(), spec.input_dim, spec.init_scale, rng);

    std::size_t width_in = spec.stem_width();
    for (std::size_t s = 0; s < spec.scales.size(); ++s) {
        const std::size_t width = spec.scales[s].width;
        for (int j = 0; j < spec.scales[s].blocks; ++j) {
            Block b;
            b.scale_index = static_cast<int>(s);
            b.index_in_scale = j;
            const std::size_t n_in = (j == 0) ? width_in : width;
            if (j == 0) {
                // Drawn for every variant so later tensors line up across variants.
                LayerParams shortcut = make_layer(n_in, width, spec, rng);
                if (spec.variant != Variant::BnOnly) b.shortcut = std::move(shortcut);
            }
            b.first = make_layer(n_in, width, spec, rng);
            b.second = make_layer(width, width, spec, rng);
            m.blocks.push_back(std::move(b));
        }
        width_in = width;
    }
    m.head = make_layer(width_in, spec.num_classes, spec, rng);
    return m;
}

std::pair<Batch, BlockCache> block_forward(const Batch& x, const Block& b, Variant variant) {
    if (x.cols() != b.n_in()) throw NumericsError("block_forward: input width does not match block");
    BlockCache cache;
    auto [mid, c1] = layer_forward(x, b.first);
    auto [out, c2] = layer_forward(mid, b.second);
    cache.first = std::move(c1);
    cache.second = std::move(c2);
    if (variant == Variant::BnOnly) return {std::move(out), std::move(cache)};

    if (b.shortcut) {
        auto [sc, cs] = layer_forward(x, *b.shortcut);
        out += sc;
        cache.shortcut = std::move(cs);
    } else {
        if (x.cols() != out.cols()) throw NumericsError("block_forward: identity shortcut needs equal widths");
        out += x;
    }
    return {std::move(out), std::move(cache)};
}

BlockBackward block_backward(const Batch& dy, const BlockCache& cache, const Block& b, Variant variant) {
    BlockBackward g;
    g.second = layer_backward(dy, cache.second, b.second);
    g.first = layer_backward(g.second.dx, cache.first, b.first);
    g.branch_part = g.first.dx;
    if (variant == Variant::BnOnly) {
        g.shortcut_part = Batch(dy.rows(), b.n_in());
    } else if (b.shortcut) {
        if (!cache.shortcut) throw NumericsError("block_backward: cache lacks shortcut state");
        g.shortcut = layer_backward(dy, *cache.shortcut, *b.shortcut);
        g.shortcut_part = g.shortcut->dx;
    } else {
        g.shortcut_part = dy;
    }
    g.dx = g.shortcut_part + g.branch_part;
    return g;
}

ForwardPass network_forward(const Model& m, const Batch& x) {
    ForwardPass f;
    auto [h, stem_cache] = dense_forward(x, m.stem);
    f.stem = std::move(stem_cache);
    f.stem_output = h;
    f.blocks.reserve(m.blocks.size());
    f.block_outputs.reserve(m.blocks.size());
    for (const auto& b : m.blocks) {
        auto [y, cache] = block_forward(h, b, m.spec.variant);
        f.blocks.push_back(std::move(cache));
        f.block_outputs.push_back(y);
        h = std::move(y);
    }
    auto [logits, head_cache] = layer_forward(h, m.head);
    f.head = std::move(head_cache);
    f.logits = std::move(logits);
    return f;
}

namespace {

void store_layer_grads(LayerParams& dst, LayerGrads& g) {
    dst.dense.weights = std::move(g.dw);
    if (dst.bn && g.bn) {
        dst.bn->gamma = std::move(g.bn->dgamma);
        dst.bn->beta = std::move(g.bn->dbeta);
    }
}

}  // namespace

GradientTape network_backward(const Model& m, const ForwardPass& fwd, const Batch& dlogits, const TapeOptions& opts) {
    if (fwd.blocks.size() != m.blocks.size()) throw NumericsError("network_backward: forward pass does not match model");
    if (!dlogits.same_shape(fwd.logits)) throw NumericsError("network_backward: dlogits shape does not match logits");

    GradientTape tape;
    tape.params = zeros_like(m);
    const std::size_t nb = m.blocks.size();
    tape.boundary.resize(nb);
    if (opts.capture_branches) {
        tape.shortcut_parts.resize(nb);
        tape.branch_parts.resize(nb);
    }

    auto head = layer_backward(dlogits, fwd.head, m.head);
    Batch dh = std::move(head.dx);
    if (opts.capture_post_bn && m.head.bn) tape.post_bn.push_back(dh);
    store_layer_grads(tape.params.head, head);

    for (std::size_t i = nb; i-- > 0;) {
        tape.boundary[i] = dh;
        auto g = block_backward(dh, fwd.blocks[i], m.blocks[i], m.spec.variant);
        if (opts.capture_post_bn) {
            if (g.second.bn) tape.post_bn.push_back(g.second.dx);
            if (g.first.bn) tape.post_bn.push_back(g.first.dx);
            if (g.shortcut && g.shortcut->bn) tape.post_bn.push_back(g.shortcut->dx);
        }
        auto& pb = tape.params.blocks[i];
        store_layer_grads(pb.first, g.first);
        store_layer_grads(pb.second, g.second);
        if (pb.shortcut && g.shortcut) store_layer_grads(*pb.shortcut, *g.shortcut);
        if (opts.capture_branches) {
            tape.shortcut_parts[i] = std::move(g.shortcut_part);
            tape.branch_parts[i] = std::move(g.branch_part);
        }
        dh = std::move(g.dx);
    }

    tape.stem_output_grad = dh;
    auto stem = dense_backward(dh, fwd.stem, m.stem);
    tape.params.stem.weights = std::move(stem.dw);
    tape.input_grad = std::move(stem.dx);
    return tape;
}

}  // namespace gradprop

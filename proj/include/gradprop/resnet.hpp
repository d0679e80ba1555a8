#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradprop/layers.hpp"
#include "gradprop/numerics.hpp"

namespace gradprop {

/// Ablation variants. The numeric values match the `--variant 1|2|3` flag.
enum class Variant : int {
    BnResidual = 1,    // BN sublayers and residual shortcuts
    BnOnly = 2,        // shortcut additions removed
    ResidualOnly = 3,  // BN sublayers removed
};

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view text);

struct ScaleSpec {
    int blocks = 1;
    std::size_t width = 0;
};

struct NetSpec {
    std::vector<ScaleSpec> scales;
    int growth_k = 2;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    Variant variant = Variant::BnResidual;
    /// Multiplier on the Xavier bound; 1.0 is plain Xavier-uniform.
    double init_scale = 1.0;
    double bn_epsilon = 1e-5;

    /// Throws NumericsError when widths do not follow the k-growth rule or any
    /// count is non-positive.
    void validate() const;
    std::size_t num_blocks() const noexcept;
    /// Width of the tensor entering the first block (width of scale 1 / k).
    std::size_t stem_width() const;
    std::vector<int> blocks_per_scale() const;
};

/// Three scales × five blocks, widths 16/32/64, k = 2.
NetSpec resnet15_spec(std::size_t input_dim, std::size_t num_classes, Variant variant = Variant::BnResidual);

/// One residual block: two stacked layers on the convolution branch and an
/// optional BN-ReLU-dense shortcut (first block of a scale only).
struct Block {
    LayerParams first;   // W̃
    LayerParams second;  // Ŵ
    std::optional<LayerParams> shortcut;  // W̄
    int scale_index = 0;     // 0-based
    int index_in_scale = 0;  // 0-based

    bool is_first_of_scale() const noexcept { return index_in_scale == 0; }
    std::size_t n_in() const noexcept { return first.n_in(); }
    std::size_t n_out() const noexcept { return second.n_out(); }
};

struct Model {
    NetSpec spec;
    DenseParams stem;
    std::vector<Block> blocks;
    LayerParams head;
};

/// Same structure as `m` with every tensor zeroed; used for gradients.
Model zeros_like(const Model& m);

/// Shape of one parameter tensor; vectors (γ, β) are 1 × n.
struct TensorShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Visits every parameter tensor in a fixed order with a stable name.
void for_each_tensor(Model& m, const std::function<void(const std::string&, TensorShape, std::span<double>)>& fn);
void for_each_tensor(const Model& m,
                     const std::function<void(const std::string&, TensorShape, std::span<const double>)>& fn);

/// Xavier-uniform weights, γ = 1, β = 0. Random draws are consumed in the same
/// order for every variant, so models built from equal seeds share all
/// common tensors bit for bit.
Model build_network(const NetSpec& spec, SeededRng& rng);

struct BlockCache {
    LayerCache first;
    LayerCache second;
    std::optional<LayerCache> shortcut;
};

std::pair<Batch, BlockCache> block_forward(const Batch& x, const Block& b, Variant variant);

struct BlockBackward {
    Batch dx;
    Batch shortcut_part;  // gradient reaching the input through the shortcut
    Batch branch_part;    // gradient reaching the input through the convolution branch
    LayerGrads first;
    LayerGrads second;
    std::optional<LayerGrads> shortcut;
};

BlockBackward block_backward(const Batch& dy, const BlockCache& cache, const Block& b, Variant variant);

struct ForwardPass {
    Batch logits;
    DenseCache stem;
    Batch stem_output;
    std::vector<BlockCache> blocks;
    std::vector<Batch> block_outputs;  // y_L for every block
    LayerCache head;
};

ForwardPass network_forward(const Model& m, const Batch& x);

struct TapeOptions {
    /// Keep the shortcut/branch summands of every boundary gradient.
    bool capture_branches = false;
    /// Keep the gradient leaving every BN sublayer.
    bool capture_post_bn = false;
};

struct GradientTape {
    /// Δy_L: gradient w.r.t. the output of block L, in forward block order.
    std::vector<Batch> boundary;
    /// Gradient w.r.t. the stem output (input of the first block).
    Batch stem_output_grad;
    Batch input_grad;
    Model params;  // parameter gradients, same layout as the model
    std::vector<Batch> shortcut_parts;
    std::vector<Batch> branch_parts;
    std::vector<Batch> post_bn;
};

GradientTape network_backward(const Model& m, const ForwardPass& fwd, const Batch& dlogits,
                              const TapeOptions& opts = {});

void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace gradprop

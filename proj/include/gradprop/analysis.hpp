#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gradprop/numerics.hpp"
#include "gradprop/resnet.hpp"

namespace gradprop {

/// How shifted-Gaussian ReLU moments are obtained.
///
/// PaperFormula evaluates the closed-form expressions literally, including
/// E(y²)(0) = 1.5. Oracle integrates the same expectations numerically
/// (E(y²)(0) = 0.5). The two disagree by construction and both are kept.
enum class MomentMode { PaperFormula, Oracle };

std::string_view mode_name(MomentMode m) noexcept;
MomentMode parse_mode(std::string_view text);

struct ReluMoments {
    double e_y = 0.0;
    double e_y2 = 0.0;
};

/// y = ReLU(z + a), z ~ N(0, 1), from the closed-form expressions.
ReluMoments relu_moments_paper(double a) noexcept;
/// Same expectations by adaptive Simpson quadrature (absolute error <= 1e-8).
ReluMoments relu_moments_oracle(double a);
ReluMoments relu_moments(double a, MomentMode mode);

struct MonteCarloMoments {
    double e_y = 0.0;
    double e_y2 = 0.0;
    double stderr_y = 0.0;
    double stderr_y2 = 0.0;
    std::size_t samples = 0;
};

MonteCarloMoments relu_moments_monte_carlo(double a, std::size_t samples, std::uint64_t seed);

/// Centered variance E(y²) − E(y)² of ReLU(z + a) in the given mode.
double relu_output_variance(double a, MomentMode mode);

struct MomentReport {
    double a = 0.0;
    MomentMode mode = MomentMode::Oracle;
    double e_y = 0.0;
    double e_y2 = 0.0;
    double p_a = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double eq14_constant = 0.0;  // c1 / c2
};

MomentReport moment_report(double a, MomentMode mode);

struct CConstants {
    double c1 = 0.0;  // 0.5 + p(a): fraction of gradient passing the ReLU
    double c2 = 0.0;  // second moment of the shifted ReLU output
    double ratio() const noexcept { return c1 / c2; }
};

CConstants c_constants(double a, MomentMode mode);

/// Variance of the gradient leaving a BN sublayer, per feature:
/// (γ² / Var(x)) · (Var(dz) − E(dz·ẑ)²).
std::vector<double> bn_grad_variance(std::span<const double> var_dz, std::span<const double> e_dz_zhat,
                                     std::span<const double> gamma, std::span<const double> var_x);

/// out_i = Σ_j W_ij² · var_in_j
std::vector<double> forward_variance_conv(const Matrix& w, std::span<const double> var_in);
/// out_i = Σ_j W_ji² · var_dout_j
std::vector<double> backward_variance_conv(const Matrix& w, std::span<const double> var_dout);

/// Gradient variance after the ReLU backward pass: (0.5 + p(a)) · var_din.
double relu_grad_variance(double a, double var_din) noexcept;

/// Per-layer gradient-variance map from Δy_L back to Δy_{L−1}:
/// column sums of W_L² weighted by Var(Δy_L), divided by the row sums of
/// W_{L−1}², times c1/c2. W_L is (n_L′ × n_L), W_{L−1} is (n_L × ·).
std::vector<double> layer_grad_variance_ratio(const Matrix& w_l, const Matrix& w_lm1, std::span<const double> var_dy_l,
                                              double a, MomentMode mode);

struct VarianceBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// lower = (n_L′/n_{L−1}) · (Var(W_L)/Var(W_{L−1})) · (c1/c2) · E(Var(Δy_L)); upper = K · lower.
VarianceBounds layer_grad_variance_bounds(std::size_t n_l_out, std::size_t n_lm1_in, double var_w_l,
                                          double var_w_lm1, double e_var_dy_l, double a, MomentMode mode, double k);

/// (c + d)² / (4cd), the maximum of E(1/X)·E(X) for X supported on [c, d].
double kantorovich_bound(double c, double d);

struct KEstimate {
    double empirical = 0.0;       // mean(1/X) · mean(X) over the row sums X of W²
    double analytic_bound = 0.0;  // kantorovich_bound(min X, max X)
    double min_row_sum = 0.0;
    double max_row_sum = 0.0;
};

KEstimate estimate_K(const Matrix& w);

/// Weights of one residual block as seen by the variance recursions.
struct BlockWeights {
    Matrix tilde;                // first branch layer W̃
    Matrix hat;                  // second branch layer Ŵ
    std::optional<Matrix> bar;   // shortcut layer W̄ (first block of a scale)
};

/// Forward variance of every block output inside one scale, by recursion:
///   Var(y_1) = c · (W̄₁²·1 + Ŵ₁²·1) · f,   Var(y_L) = Var(y_{L−1}) + c · Ŵ_L²·1.
/// PaperFormula: c = closed-form c₂ and f = 1/k. Oracle: c is the exact
/// centered variance of the ReLU output and f = 1, since the row sums of the
/// actual (n × n/k) shortcut matrix already account for the narrower input.
std::vector<std::vector<double>> resnet_forward_variance(std::span<const BlockWeights> scale, int k, double a,
                                                         MomentMode mode);
/// Closed form of the same quantity for block `upto` (1-based):
///   c · (Σ_{J=2}^{L} Ŵ_J²·1 + f · (W̄₁²·1 + Ŵ₁²·1)).
std::vector<double> resnet_forward_variance_closed_form(std::span<const BlockWeights> scale, int k, double a,
                                                        MomentMode mode, std::size_t upto);

/// Scalar weight variances of one block (variance of all matrix entries).
struct BlockWeightVariances {
    double var_tilde = 0.0;
    double var_hat = 0.0;
    std::optional<double> var_bar;
};

struct BackwardBound {
    int block_in_scale = 0;                 // L, 1-based
    std::optional<double> bound;            // K_L · factor · E(Var(Δy_L)); none for L = 1
    std::optional<double> factor;           // 1 + (c1/c2)² Var(W̃_L) / [...]
    std::optional<double> simplified_ratio; // L / (L − 1); none for L = 1
};

/// Per-block upper bound on E(Var(Δy_{L−1})) inside one scale. `k_per_block`
/// holds K_L for each block (use 1.0 for the K-free factor).
std::vector<BackwardBound> resnet_backward_variance_bound(std::span<const BlockWeightVariances> scale, int k,
                                                          double e_var_dy_l, double a, MomentMode mode,
                                                          std::span<const double> k_per_block);

/// L / (L − 1); throws for L < 2.
double simplified_ratio(int block_in_scale);

/// Variance of all entries of a matrix (population form).
double matrix_entry_variance(const Matrix& w);

/// Extracts per-scale block weights from a model.
std::vector<std::vector<BlockWeights>> model_block_weights(const Model& m);

/// Per-block predictions for a concrete model.
struct BlockPrediction {
    int block_index = 0;  // 1-based, forward order
    int scale_index = 0;  // 1-based
    double forward_variance_paper = 0.0;   // feature mean
    double forward_variance_oracle = 0.0;  // feature mean
    std::optional<double> backward_lower;
    std::optional<double> backward_upper;
    double k_estimate = 1.0;  // K(W̃_L) · K(Ŵ_{L−1}), empirical
    std::optional<double> simplified_ratio;
};

/// `a` is the mean |β/γ| to plug into the constants; `mode` selects the
/// constants of the backward bound (both forward variants are always filled).
/// backward_lower is the K-free factor, backward_upper multiplies it by K_L,
/// both relative to E(Var(Δy_L)) = 1.
std::vector<BlockPrediction> predict_model(const Model& m, double a, MomentMode mode);

}  // namespace gradprop

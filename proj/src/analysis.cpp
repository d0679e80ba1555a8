#include "gradprop/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gradprop {

std::string_view mode_name(MomentMode m) noexcept { return m == MomentMode::PaperFormula ? "paper" : "oracle"; }

MomentMode parse_mode(std::string_view text) {
    if (text == "paper") return MomentMode::PaperFormula;
    if (text == "oracle") return MomentMode::Oracle;
    throw std::invalid_argument("unknown moment mode '" + std::string(text) + "' (expected paper or oracle)");
}

ReluMoments relu_moments_paper(double a) noexcept {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
    const double sqrt_2_over_pi = std::sqrt(2.0 / std::numbers::pi);
    const double g = std::exp(-0.5 * a * a);
    ReluMoments m;
    m.e_y = inv_sqrt_2pi + a / 2.0 + inv_sqrt_2pi * (1.0 - g);
    m.e_y2 = 0.5 + sqrt_2_over_pi * a + 0.5 * a * a + g + p_of_a(a);
    return m;
}

ReluMoments relu_moments_oracle(double a) {
    // The integrand vanishes below z = -a; beyond 12 standard deviations the
    // Gaussian tail is far below the tolerance.
    const double lo = std::max(-a, -12.0);
    const double hi = std::max(lo, 0.0) + 12.0;
    constexpr double tol = 1e-10;
    ReluMoments m;
    m.e_y = integrate_adaptive_simpson([a](double z) { return std::max(z + a, 0.0) * normal_pdf(z); }, lo, hi, tol);
    m.e_y2 = integrate_adaptive_simpson(
        [a](double z) {
            const double y = std::max(z + a, 0.0);
            return y * y * normal_pdf(z);
        },
        lo, hi, tol);
    return m;
}

ReluMoments relu_moments(double a, MomentMode mode) {
    return mode == MomentMode::PaperFormula ? relu_moments_paper(a) : relu_moments_oracle(a);
}

MonteCarloMoments relu_moments_monte_carlo(double a, std::size_t samples, std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("relu_moments_monte_carlo: need at least two samples");
    SeededRng rng(seed);
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double y = std::max(rng.normal() + a, 0.0);
        const double y2 = y * y;
        s1 += y;
        s2 += y2;
        s3 += y2 * y;
        s4 += y2 * y2;
    }
    const double n = static_cast<double>(samples);
    MonteCarloMoments m;
    m.samples = samples;
    m.e_y = s1 / n;
    m.e_y2 = s2 / n;
    const double var_y = std::max(0.0, s2 / n - m.e_y * m.e_y) * n / (n - 1.0);
    const double var_y2 = std::max(0.0, s4 / n - m.e_y2 * m.e_y2) * n / (n - 1.0);
    m.stderr_y = std::sqrt(var_y / n);
    m.stderr_y2 = std::sqrt(var_y2 / n);
    (void)s3;
    return m;
}

double relu_output_variance(double a, MomentMode mode) {
    const auto m = relu_moments(a, mode);
    return m.e_y2 - m.e_y * m.e_y;
}

CConstants c_constants(double a, MomentMode mode) { return {0.5 + p_of_a(a), relu_moments(a, mode).e_y2}; }

MomentReport moment_report(double a, MomentMode mode) {
    const auto m = relu_moments(a, mode);
    MomentReport r;
    r.a = a;
    r.mode = mode;
    r.e_y = m.e_y;
    r.e_y2 = m.e_y2;
    r.p_a = p_of_a(a);
    r.c1 = 0.5 + r.p_a;
    r.c2 = m.e_y2;
    r.eq14_constant = r.c1 / r.c2;
    return r;
}

std::vector<double> bn_grad_variance(std::span<const double> var_dz, std::span<const double> e_dz_zhat,
                                     std::span<const double> gamma, std::span<const double> var_x) {
    const std::size_t n = var_dz.size();
    if (e_dz_zhat.size() != n || gamma.size() != n || var_x.size() != n)
        throw NumericsError("bn_grad_variance: length mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(var_x[i] > 0.0)) throw NumericsError("bn_grad_variance: input variance must be positive");
        out[i] = gamma[i] * gamma[i] / var_x[i] * (var_dz[i] - e_dz_zhat[i] * e_dz_zhat[i]);
    }
    return out;
}

std::vector<double> forward_variance_conv(const Matrix& w, std::span<const double> var_in) {
    if (w.cols() != var_in.size()) throw NumericsError("forward_variance_conv: shape mismatch");
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto row = w.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) out[i] += row[j] * row[j] * var_in[j];
    }
    return out;
}

std::vector<double> backward_variance_conv(const Matrix& w, std::span<const double> var_dout) {
    if (w.rows() != var_dout.size()) throw NumericsError("backward_variance_conv: shape mismatch");
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.rows(); ++j) {
        const auto row = w.row(j);
        for (std::size_t i = 0; i < row.size(); ++i) out[i] += row[i] * row[i] * var_dout[j];
    }
    return out;
}

double relu_grad_variance(double a, double var_din) noexcept { return (0.5 + p_of_a(a)) * var_din; }

std::vector<double> layer_grad_variance_ratio(const Matrix& w_l, const Matrix& w_lm1, std::span<const double> var_dy_l,
                                              double a, MomentMode mode) {
    if (w_lm1.rows() != w_l.cols()) throw NumericsError("layer_grad_variance_ratio: W_{L-1} rows must equal W_L columns");
    const auto numerator = backward_variance_conv(w_l, var_dy_l);
    const double constant = c_constants(a, mode).ratio();
    std::vector<double> out(numerator.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double denom = 0.0;
        for (double v : w_lm1.row(i)) denom += v * v;
        if (!(denom > 0.0)) throw NumericsError("layer_grad_variance_ratio: zero row sum in W_{L-1}");
        out[i] = numerator[i] / denom * constant;
    }
    return out;
}

VarianceBounds layer_grad_variance_bounds(std::size_t n_l_out, std::size_t n_lm1_in, double var_w_l,
                                          double var_w_lm1, double e_var_dy_l, double a, MomentMode mode, double k) {
    if (n_l_out == 0 || n_lm1_in == 0) throw NumericsError("layer_grad_variance_bounds: dimensions must be positive");
    if (!(var_w_l > 0.0) || !(var_w_lm1 > 0.0)) throw NumericsError("layer_grad_variance_bounds: nonpositive variance");
    if (!(k >= 1.0)) throw NumericsError("layer_grad_variance_bounds: K must be >= 1");
    const double lower = static_cast<double>(n_l_out) / static_cast<double>(n_lm1_in) * (var_w_l / var_w_lm1) *
                         c_constants(a, mode).ratio() * e_var_dy_l;
    return {lower, k * lower};
}

double kantorovich_bound(double c, double d) {
    if (!(c > 0.0)) throw NumericsError("kantorovich_bound: c must be positive");
    if (d < c) throw NumericsError("kantorovich_bound: need c <= d");
    return (c + d) * (c + d) / (4.0 * c * d);
}

KEstimate estimate_K(const Matrix& w) {
    if (w.rows() == 0) throw NumericsError("estimate_K: empty matrix");
    std::vector<double> x(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (double v : w.row(i)) x[i] += v * v;
    KEstimate k;
    k.min_row_sum = *std::min_element(x.begin(), x.end());
    k.max_row_sum = *std::max_element(x.begin(), x.end());
    if (!(k.min_row_sum > 0.0)) throw NumericsError("estimate_K: zero row");
    double mean_x = 0.0, mean_inv = 0.0;
    for (double v : x) {
        mean_x += v;
        mean_inv += 1.0 / v;
    }
    mean_x /= static_cast<double>(x.size());
    mean_inv /= static_cast<double>(x.size());
    k.empirical = mean_x * mean_inv;
    k.analytic_bound = kantorovich_bound(k.min_row_sum, k.max_row_sum);
    return k;
}

namespace {

struct ForwardConstants {
    double c;
    double first_block_factor;
};

ForwardConstants forward_constants(double a, MomentMode mode, int k) {
    if (k < 1) throw NumericsError("resnet_forward_variance: k must be positive");
    if (mode == MomentMode::PaperFormula) return {relu_moments_paper(a).e_y2, 1.0 / k};
    return {relu_output_variance(a, MomentMode::Oracle), 1.0};
}

std::vector<double> row_sums_sq(const Matrix& w) {
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (double v : w.row(i)) out[i] += v * v;
    return out;
}

void check_scale(std::span<const BlockWeights> scale) {
    if (scale.empty()) throw NumericsError("resnet_forward_variance: empty scale");
    if (!scale.front().bar) throw NumericsError("resnet_forward_variance: first block needs shortcut weights");
    const std::size_t n = scale.front().hat.rows();
    if (scale.front().bar->rows() != n) throw NumericsError("resnet_forward_variance: shortcut/branch width mismatch");
    for (const auto& b : scale)
        if (b.hat.rows() != n) throw NumericsError("resnet_forward_variance: block width mismatch within scale");
}

}  // namespace

std::vector<std::vector<double>> resnet_forward_variance(std::span<const BlockWeights> scale, int k, double a,
                                                         MomentMode mode) {
    check_scale(scale);
    const auto fc = forward_constants(a, mode, k);
    std::vector<std::vector<double>> out;
    out.reserve(scale.size());

    const auto bar = row_sums_sq(*scale.front().bar);
    const auto hat1 = row_sums_sq(scale.front().hat);
    std::vector<double> var(bar.size());
    for (std::size_t i = 0; i < var.size(); ++i) var[i] = fc.c * fc.first_block_factor * (bar[i] + hat1[i]);
    out.push_back(var);

    for (std::size_t l = 1; l < scale.size(); ++l) {
        const auto hat = row_sums_sq(scale[l].hat);
        for (std::size_t i = 0; i < var.size(); ++i) var[i] += fc.c * hat[i];
        out.push_back(var);
    }
    return out;
}

std::vector<double> resnet_forward_variance_closed_form(std::span<const BlockWeights> scale, int k, double a,
                                                        MomentMode mode, std::size_t upto) {
    check_scale(scale);
    if (upto < 1 || upto > scale.size()) throw NumericsError("resnet_forward_variance_closed_form: block out of range");
    const auto fc = forward_constants(a, mode, k);
    const auto bar = row_sums_sq(*scale.front().bar);
    const auto hat1 = row_sums_sq(scale.front().hat);
    std::vector<double> sum(bar.size(), 0.0);
    for (std::size_t j = 1; j < upto; ++j) {
        const auto hat = row_sums_sq(scale[j].hat);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += hat[i];
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = fc.c * (sum[i] + fc.first_block_factor * (bar[i] + hat1[i]));
    return sum;
}

double simplified_ratio(int block_in_scale) {
    if (block_in_scale < 2) throw NumericsError("simplified_ratio: undefined for L < 2");
    return static_cast<double>(block_in_scale) / static_cast<double>(block_in_scale - 1);
}

std::vector<BackwardBound> resnet_backward_variance_bound(std::span<const BlockWeightVariances> scale, int k,
                                                          double e_var_dy_l, double a, MomentMode mode,
                                                          std::span<const double> k_per_block) {
    if (scale.empty()) throw NumericsError("resnet_backward_variance_bound: empty scale");
    if (k_per_block.size() != scale.size()) throw NumericsError("resnet_backward_variance_bound: need one K per block");
    if (!scale.front().var_bar) throw NumericsError("resnet_backward_variance_bound: first block needs Var(W̄)");
    if (k < 1) throw NumericsError("resnet_backward_variance_bound: k must be positive");
    const double r = c_constants(a, mode).ratio();

    std::vector<BackwardBound> out;
    double denom = (*scale.front().var_bar + scale.front().var_hat) / k;
    for (std::size_t l = 0; l < scale.size(); ++l) {
        BackwardBound b;
        b.block_in_scale = static_cast<int>(l + 1);
        if (l >= 1) {
            if (l >= 2) denom += scale[l - 1].var_hat;  // Σ_{J=2}^{L-1} Var(Ŵ_J)
            if (!(denom > 0.0)) throw NumericsError("resnet_backward_variance_bound: nonpositive variance");
            const double factor = 1.0 + r * r * scale[l].var_tilde / denom;
            b.factor = factor;
            b.bound = k_per_block[l] * factor * e_var_dy_l;
            b.simplified_ratio = simplified_ratio(b.block_in_scale);
        }
        out.push_back(b);
    }
    return out;
}

double matrix_entry_variance(const Matrix& w) {
    if (w.size() == 0) return 0.0;
    double mean = 0.0;
    for (double v : w.values()) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w.values()) var += (v - mean) * (v - mean);
    return var / static_cast<double>(w.size());
}

std::vector<std::vector<BlockWeights>> model_block_weights(const Model& m) {
    std::vector<std::vector<BlockWeights>> scales(m.spec.scales.size());
    for (const auto& b : m.blocks) {
        BlockWeights bw{b.first.dense.weights, b.second.dense.weights, std::nullopt};
        if (b.shortcut) bw.bar = b.shortcut->dense.weights;
        scales[static_cast<std::size_t>(b.scale_index)].push_back(std::move(bw));
    }
    return scales;
}

std::vector<BlockPrediction> predict_model(const Model& m, double a, MomentMode mode) {
    std::vector<BlockPrediction> out;
    const auto scales = model_block_weights(m);
    int block_index = 0;
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const auto& scale = scales[s];
        std::vector<std::vector<double>> fwd_paper, fwd_oracle;
        const bool has_shortcut = !scale.empty() && scale.front().bar.has_value();
        if (has_shortcut) {
            fwd_paper = resnet_forward_variance(scale, m.spec.growth_k, a, MomentMode::PaperFormula);
            fwd_oracle = resnet_forward_variance(scale, m.spec.growth_k, a, MomentMode::Oracle);
        }

        std::vector<BlockWeightVariances> vars;
        std::vector<double> ks;
        for (std::size_t l = 0; l < scale.size(); ++l) {
            BlockWeightVariances v{matrix_entry_variance(scale[l].tilde), matrix_entry_variance(scale[l].hat), std::nullopt};
            if (scale[l].bar) v.var_bar = matrix_entry_variance(*scale[l].bar);
            vars.push_back(v);
            // K_L combines the bounds of the two BN sublayers the gradient
            // crosses in the branch: the one fed by W̃_L and the one fed by
            // the previous block output (approximated by its last layer).
            double k_l = estimate_K(scale[l].tilde).empirical;
            if (l > 0) k_l *= estimate_K(scale[l - 1].hat).empirical;
            ks.push_back(k_l);
        }
        std::vector<BackwardBound> bounds;
        if (has_shortcut) bounds = resnet_backward_variance_bound(vars, m.spec.growth_k, 1.0, a, mode, ks);

        for (std::size_t l = 0; l < scale.size(); ++l) {
            BlockPrediction p;
            p.block_index = ++block_index;
            p.scale_index = static_cast<int>(s + 1);
            p.k_estimate = ks[l];
            auto mean = [](const std::vector<double>& v) {
                double sum = 0.0;
                for (double x : v) sum += x;
                return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
            };
            if (has_shortcut) {
                p.forward_variance_paper = mean(fwd_paper[l]);
                p.forward_variance_oracle = mean(fwd_oracle[l]);
                if (bounds[l].factor) {
                    p.backward_lower = *bounds[l].factor;
                    p.backward_upper = *bounds[l].bound;
                    p.simplified_ratio = bounds[l].simplified_ratio;
                }
            }
            out.push_back(p);
        }
    }
    return out;
}

}  // namespace gradprop

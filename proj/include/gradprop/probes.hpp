#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gradprop/resnet.hpp"

namespace gradprop {

/// One probe reading at a block boundary.
struct VarTraceRow {
    long step = 0;
    int block_index = 0;  // 1-based, forward order
    int scale_index = 0;  // 1-based
    double mean_grad_variance = 0.0;
    double grad_l2 = 0.0;
    double mean_abs_a = 0.0;

    bool finite() const noexcept;
};

using VarTrace = std::vector<VarTraceRow>;

/// Mean over features of the per-feature batch variance of `grad`, plus the
/// l2 norm of the whole grid. Non-finite input yields a row carrying the
/// non-finite values (the explosion marker).
VarTraceRow record_grad_stats(long step, int block_index, int scale_index, const Batch& grad);

/// Mean |β/γ| over the features of one BN sublayer.
struct AStatRow {
    long step = 0;
    int layer_index = 0;  // 1-based over all BN sublayers, visit order
    int block_index = 0;  // 0 for the head
    std::string layer;    // e.g. "block3.first"
    double mean_abs_a = 0.0;
    int excluded = 0;     // features skipped because γ == 0
};

/// Empty for models without BN sublayers.
std::vector<AStatRow> record_a_stats(long step, const Model& m);

/// Average of the per-layer mean |β/γ| over the BN sublayers inside each
/// block; 0 for blocks without BN.
std::vector<double> block_mean_abs_a(const Model& m);

/// Probes every block boundary of one backward pass.
VarTrace probe_boundaries(long step, const Model& m, const GradientTape& tape);

struct ExplosionReport {
    bool flagged = false;
    long step = -1;
    int block_index = -1;
    std::string reason;
};

inline constexpr double kExplosionVarianceRatio = 1e3;

/// Flags non-finite rows, or a step whose max/min mean_grad_variance across
/// blocks reaches kExplosionVarianceRatio.
ExplosionReport detect_explosion(const VarTrace& trace);

/// Rows of `trace` at `step`, in block order.
VarTrace rows_at_step(const VarTrace& trace, long step);

/// Shape of the backward variance profile at one step.
struct ProfileShape {
    /// Per scale: Var(Δy_{L-1}) / Var(Δy_L) for L = 2..N inside the scale.
    std::vector<std::vector<double>> within_scale_ratios;
    /// Per boundary between scale s-1 and s: Var at last block of s-1 divided
    /// by Var at first block of s.
    std::vector<double> boundary_ratios;
    bool growth_ok = true;      // every within-scale ratio >= 1
    bool decreasing_ok = true;  // ratios strictly decrease with L inside each scale
    bool dip_ok = true;         // every boundary ratio < 1

    bool ok() const noexcept { return growth_ok && decreasing_ok && dip_ok; }
};

/// `step_rows` must hold exactly one row per block, in block order.
ProfileShape analyze_profile(const VarTrace& step_rows, const std::vector<int>& blocks_per_scale);

void write_trace_csv(const VarTrace& trace, const std::filesystem::path& path);
VarTrace read_trace_csv(const std::filesystem::path& path);
void write_a_stats_csv(const std::vector<AStatRow>& rows, const std::filesystem::path& path);

/// Formats a double for CSV output: round-trip precision, `inf`/`-inf`/`nan`
/// for non-finite values.
std::string format_csv_double(double v);
double parse_csv_double(const std::string& s);

}  // namespace gradprop

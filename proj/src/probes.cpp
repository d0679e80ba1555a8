#include "gradprop/probes.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace gradprop {

bool VarTraceRow::finite() const noexcept {
    return std::isfinite(mean_grad_variance) && std::isfinite(grad_l2) && std::isfinite(mean_abs_a);
}

VarTraceRow record_grad_stats(long step, int block_index, int scale_index, const Batch& grad) {
    VarTraceRow row{step, block_index, scale_index, 0.0, 0.0, 0.0};
    row.grad_l2 = l2_norm(grad);
    if (!all_finite(grad)) {
        row.mean_grad_variance = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(row.grad_l2)) row.grad_l2 = std::numeric_limits<double>::infinity();
        return row;
    }
    const auto var = batch_var(grad);
    double sum = 0.0;
    for (double v : var) sum += v;
    row.mean_grad_variance = var.empty() ? 0.0 : sum / static_cast<double>(var.size());
    return row;
}

namespace {

struct LayerA {
    double mean_abs_a;
    int excluded;
};

LayerA layer_a(const BnParams& bn) {
    double sum = 0.0;
    int used = 0;
    int excluded = 0;
    for (std::size_t i = 0; i < bn.gamma.size(); ++i) {
        if (bn.gamma[i] == 0.0) {
            ++excluded;
            continue;
        }
        sum += std::abs(bn.beta[i] / bn.gamma[i]);
        ++used;
    }
    return {used > 0 ? sum / used : 0.0, excluded};
}

}  // namespace

std::vector<AStatRow> record_a_stats(long step, const Model& m) {
    std::vector<AStatRow> rows;
    int layer_index = 0;
    auto add = [&](const LayerParams& p, int block_index, const std::string& name) {
        if (!p.bn) return;
        const auto a = layer_a(*p.bn);
        rows.push_back({step, ++layer_index, block_index, name, a.mean_abs_a, a.excluded});
    };
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const auto& b = m.blocks[i];
        const int bi = static_cast<int>(i + 1);
        const std::string prefix = "block" + std::to_string(bi);
        if (b.shortcut) add(*b.shortcut, bi, prefix + ".shortcut");
        add(b.first, bi, prefix + ".first");
        add(b.second, bi, prefix + ".second");
    }
    add(m.head, 0, "head");
    return rows;
}

std::vector<double> block_mean_abs_a(const Model& m) {
    std::vector<double> out;
    out.reserve(m.blocks.size());
    for (const auto& b : m.blocks) {
        double sum = 0.0;
        int n = 0;
        for (const LayerParams* p : {b.shortcut ? &*b.shortcut : nullptr, &b.first, &b.second}) {
            if (p && p->bn) {
                sum += layer_a(*p->bn).mean_abs_a;
                ++n;
            }
        }
        out.push_back(n > 0 ? sum / n : 0.0);
    }
    return out;
}

VarTrace probe_boundaries(long step, const Model& m, const GradientTape& tape) {
    VarTrace rows;
    rows.reserve(tape.boundary.size());
    const auto a = block_mean_abs_a(m);
    for (std::size_t i = 0; i < tape.boundary.size(); ++i) {
        auto row = record_grad_stats(step, static_cast<int>(i + 1), m.blocks[i].scale_index + 1, tape.boundary[i]);
        row.mean_abs_a = a[i];
        rows.push_back(row);
    }
    return rows;
}

ExplosionReport detect_explosion(const VarTrace& trace) {
    for (const auto& row : trace) {
        if (!row.finite()) return {true, row.step, row.block_index, "non-finite gradient statistics"};
    }
    std::size_t i = 0;
    while (i < trace.size()) {
        std::size_t j = i;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        int hi_block = trace[i].block_index;
        while (j < trace.size() && trace[j].step == trace[i].step) {
            lo = std::min(lo, trace[j].mean_grad_variance);
            if (trace[j].mean_grad_variance > hi) {
                hi = trace[j].mean_grad_variance;
                hi_block = trace[j].block_index;
            }
            ++j;
        }
        if (hi > 0.0 && (lo <= 0.0 || hi / lo >= kExplosionVarianceRatio)) {
            return {true, trace[i].step, hi_block, "cross-block gradient variance ratio exceeds 1e3"};
        }
        i = j;
    }
    return {};
}

VarTrace rows_at_step(const VarTrace& trace, long step) {
    VarTrace out;
    std::copy_if(trace.begin(), trace.end(), std::back_inserter(out), [&](const auto& r) { return r.step == step; });
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.block_index < b.block_index; });
    return out;
}

ProfileShape analyze_profile(const VarTrace& step_rows, const std::vector<int>& blocks_per_scale) {
    std::size_t total = 0;
    for (int n : blocks_per_scale) total += static_cast<std::size_t>(n);
    if (step_rows.size() != total) throw std::invalid_argument("analyze_profile: need exactly one row per block");

    ProfileShape shape;
    std::size_t start = 0;
    for (std::size_t s = 0; s < blocks_per_scale.size(); ++s) {
        const auto n = static_cast<std::size_t>(blocks_per_scale[s]);
        std::vector<double> ratios;
        for (std::size_t l = 1; l < n; ++l) {
            const double prev = step_rows[start + l - 1].mean_grad_variance;
            const double cur = step_rows[start + l].mean_grad_variance;
            ratios.push_back(prev / cur);
        }
        for (std::size_t k = 0; k < ratios.size(); ++k) {
            if (!(ratios[k] >= 1.0)) shape.growth_ok = false;
            if (k > 0 && !(ratios[k] < ratios[k - 1])) shape.decreasing_ok = false;
        }
        if (s > 0) {
            const double ratio = step_rows[start - 1].mean_grad_variance / step_rows[start].mean_grad_variance;
            shape.boundary_ratios.push_back(ratio);
            if (!(ratio < 1.0)) shape.dip_ok = false;
        }
        shape.within_scale_ratios.push_back(std::move(ratios));
        start += n;
    }
    return shape;
}

std::string format_csv_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

double parse_csv_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

void write_trace_csv(const VarTrace& trace, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << "step,block_index,scale_index,mean_grad_variance,grad_l2,mean_abs_a\n";
    for (const auto& r : trace) {
        os << r.step << ',' << r.block_index << ',' << r.scale_index << ',' << format_csv_double(r.mean_grad_variance)
           << ',' << format_csv_double(r.grad_l2) << ',' << format_csv_double(r.mean_abs_a) << '\n';
    }
}

VarTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "step,block_index,scale_index,mean_grad_variance,grad_l2,mean_abs_a")
        throw std::runtime_error("variance trace: unexpected header in " + path.string());
    VarTrace trace;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw std::runtime_error("variance trace: malformed row '" + line + "'");
        VarTraceRow r;
        r.step = std::stol(cells[0]);
        r.block_index = std::stoi(cells[1]);
        r.scale_index = std::stoi(cells[2]);
        r.mean_grad_variance = parse_csv_double(cells[3]);
        r.grad_l2 = parse_csv_double(cells[4]);
        r.mean_abs_a = parse_csv_double(cells[5]);
        trace.push_back(r);
    }
    return trace;
}

void write_a_stats_csv(const std::vector<AStatRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << "step,layer_index,block_index,layer,mean_abs_a,excluded\n";
    for (const auto& r : rows) {
        os << r.step << ',' << r.layer_index << ',' << r.block_index << ',' << r.layer << ','
           << format_csv_double(r.mean_abs_a) << ',' << r.excluded << '\n';
    }
}

}  // namespace gradprop

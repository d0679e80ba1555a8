#include "gradprop/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gradprop {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

std::string opt_csv(const std::optional<double>& v) {
    return v ? format_csv_double(*v) : "nan";
}

std::pair<std::size_t, std::size_t> dataset_shape(const RunConfig& cfg) {
    if (cfg.dataset == "cifar10") return {kCifarPixels, 10};
    return {cfg.synthetic.input_dim, static_cast<std::size_t>(cfg.synthetic.num_classes)};
}

void report_run(std::ostream& log, std::string_view label, const TrainResult& r) {
    log << label << ": " << r.records.size() << " steps, final train accuracy " << std::fixed << std::setprecision(4)
        << r.final_train_accuracy << std::defaultfloat;
    if (r.exploded()) log << ", explosion at step " << r.explosion.step << " (" << r.explosion.reason << ")";
    if (r.variance_alarm.flagged)
        log << ", variance spread alarm at step " << r.variance_alarm.step << " block " << r.variance_alarm.block_index;
    log << '\n';
}

}  // namespace

Model build_model(const RunConfig& cfg, const NetSpec& spec) {
    auto rng = SeededRng(cfg.seed).fork(0);
    return build_network(spec, rng);
}

TrainResult run_training(const RunConfig& cfg, Variant variant, const Dataset& ds) {
    auto spec = cfg.net_spec(ds.input_dim(), static_cast<std::size_t>(ds.num_classes));
    spec.variant = variant;
    auto model = build_model(cfg, spec);
    return train(model, ds, cfg.sgd_config());
}

void write_accuracy_csv(const std::vector<TrainRecord>& records, const std::filesystem::path& path) {
    auto os = open_csv(path);
    os << "step,loss,train_accuracy\n";
    for (const auto& r : records)
        os << r.step << ',' << format_csv_double(r.loss) << ',' << format_csv_double(r.train_accuracy) << '\n';
}

void write_run_outputs(const TrainResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_trace_csv(r.trace, dir / "variance_trace.csv");
    write_accuracy_csv(r.records, dir / "accuracy.csv");
    write_a_stats_csv(r.a_stats, dir / "a_stats.csv");
}

std::vector<MomentReport> moment_grid() {
    std::vector<MomentReport> rows;
    for (auto mode : {MomentMode::PaperFormula, MomentMode::Oracle})
        for (int i = 0; i <= 8; ++i) rows.push_back(moment_report(0.25 * i, mode));
    return rows;
}

void write_moments_csv(const std::vector<MomentReport>& rows, const std::filesystem::path& path) {
    auto os = open_csv(path);
    os << "a,mode,e_y,e_y2,p_a,c1,c2,eq14_constant\n";
    for (const auto& r : rows) {
        os << format_csv_double(r.a) << ',' << mode_name(r.mode) << ',' << format_csv_double(r.e_y) << ','
           << format_csv_double(r.e_y2) << ',' << format_csv_double(r.p_a) << ',' << format_csv_double(r.c1) << ','
           << format_csv_double(r.c2) << ',' << format_csv_double(r.eq14_constant) << '\n';
    }
}

void write_prediction_csv(const std::vector<BlockPrediction>& rows, const std::filesystem::path& path) {
    auto os = open_csv(path);
    os << "block_index,scale_index,forward_variance_paper,forward_variance_oracle,backward_lower,backward_upper,"
          "k_estimate,simplified_ratio\n";
    for (const auto& p : rows) {
        os << p.block_index << ',' << p.scale_index << ',' << format_csv_double(p.forward_variance_paper) << ','
           << format_csv_double(p.forward_variance_oracle) << ',' << opt_csv(p.backward_lower) << ','
           << opt_csv(p.backward_upper) << ',' << format_csv_double(p.k_estimate) << ',' << opt_csv(p.simplified_ratio)
           << '\n';
    }
}

std::vector<MomentCheck> verify_moments(const std::vector<double>& grid, std::size_t samples, std::uint64_t seed) {
    std::vector<MomentCheck> out;
    SeededRng seeds(seed);
    for (double a : grid) {
        MomentCheck c;
        c.a = a;
        c.paper = relu_moments_paper(a);
        c.quadrature = relu_moments_oracle(a);
        c.monte_carlo = relu_moments_monte_carlo(a, samples, seeds.next_u64());
        auto z = [](double exact, double estimate, double se) {
            if (se > 0.0) return std::abs(exact - estimate) / se;
            return exact == estimate ? 0.0 : std::numeric_limits<double>::infinity();
        };
        c.z_y = z(c.quadrature.e_y, c.monte_carlo.e_y, c.monte_carlo.stderr_y);
        c.z_y2 = z(c.quadrature.e_y2, c.monte_carlo.e_y2, c.monte_carlo.stderr_y2);
        c.agree = c.z_y <= kOracleAgreementSigmas && c.z_y2 <= kOracleAgreementSigmas;
        out.push_back(c);
    }
    return out;
}

void write_moment_checks_csv(const std::vector<MomentCheck>& rows, const std::filesystem::path& path) {
    auto os = open_csv(path);
    os << "a,paper_e_y,paper_e_y2,quad_e_y,quad_e_y2,mc_e_y,mc_e_y2,mc_stderr_y,mc_stderr_y2,z_y,z_y2,agree\n";
    for (const auto& c : rows) {
        os << format_csv_double(c.a) << ',' << format_csv_double(c.paper.e_y) << ',' << format_csv_double(c.paper.e_y2)
           << ',' << format_csv_double(c.quadrature.e_y) << ',' << format_csv_double(c.quadrature.e_y2) << ','
           << format_csv_double(c.monte_carlo.e_y) << ',' << format_csv_double(c.monte_carlo.e_y2) << ','
           << format_csv_double(c.monte_carlo.stderr_y) << ',' << format_csv_double(c.monte_carlo.stderr_y2) << ','
           << format_csv_double(c.z_y) << ',' << format_csv_double(c.z_y2) << ',' << (c.agree ? 1 : 0) << '\n';
    }
}

void write_sweep_summary_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    auto os = open_csv(path);
    os << "batch_size,init_scale,step,exploded,growth_ok,decreasing_ok,dip_ok,shape_ok,boundary_ratios\n";
    for (const auto& r : rows) {
        std::string ratios;
        for (std::size_t i = 0; i < r.shape.boundary_ratios.size(); ++i)
            ratios += (i ? ";" : "") + format_csv_double(r.shape.boundary_ratios[i]);
        os << r.batch_size << ',' << format_csv_double(r.init_scale) << ',' << r.step << ',' << r.exploded << ','
           << r.shape.growth_ok << ',' << r.shape.decreasing_ok << ',' << r.shape.dip_ok << ',' << r.shape_ok() << ','
           << ratios << '\n';
    }
}

int cmd_predict(const RunConfig& cfg, std::ostream& log) {
    const auto [input_dim, classes] = dataset_shape(cfg);
    const auto spec = cfg.net_spec(input_dim, classes);
    const auto model = build_model(cfg, spec);

    // At init β = 0, so a = 0 in every layer; the mean |β/γ| is still read
    // from the model so a loaded checkpoint would be handled the same way.
    const auto a_per_block = block_mean_abs_a(model);
    double a = 0.0;
    for (double v : a_per_block) a += v;
    if (!a_per_block.empty()) a /= static_cast<double>(a_per_block.size());

    write_moments_csv(moment_grid(), cfg.out / "moments.csv");
    const auto pred = predict_model(model, a, cfg.mode);
    write_prediction_csv(pred, cfg.out / "prediction.csv");
    log << "wrote " << (cfg.out / "moments.csv").string() << " and " << (cfg.out / "prediction.csv").string() << " ("
        << pred.size() << " blocks, mode " << mode_name(cfg.mode) << ", a = " << a << ")\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
    const auto ds = load_dataset(cfg);
    const auto r = run_training(cfg, cfg.variant, ds);
    write_run_outputs(r, cfg.out);
    report_run(log, variant_name(cfg.variant), r);
    return r.exploded() ? kExitExplosion : kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& log) {
    const auto ds = load_dataset(cfg);
    auto os = open_csv(cfg.out / "summary.csv");
    os << "variant,final_train_accuracy,exploded\n";
    for (int v : cfg.ablate_variants) {
        const auto variant = static_cast<Variant>(v);
        const auto r = run_training(cfg, variant, ds);
        write_run_outputs(r, cfg.out / ("model" + std::to_string(v)));
        os << v << ',' << format_csv_double(r.final_train_accuracy) << ',' << (r.exploded() ? 1 : 0) << '\n';
        report_run(log, "model-" + std::to_string(v) + " (" + std::string(variant_name(variant)) + ")", r);
    }
    return kExitOk;
}

int cmd_verify_moments(const RunConfig& cfg, std::ostream& log) {
    const auto checks = verify_moments(cfg.verify_grid, cfg.mc_samples, cfg.seed);
    write_moment_checks_csv(checks, cfg.out / "verify_moments.csv");

    bool ok = true;
    log << std::setprecision(9);
    for (const auto& c : checks) {
        log << "a=" << c.a << "  paper E(y)=" << c.paper.e_y << " E(y^2)=" << c.paper.e_y2
            << "  quadrature E(y)=" << c.quadrature.e_y << " E(y^2)=" << c.quadrature.e_y2
            << "  monte-carlo E(y)=" << c.monte_carlo.e_y << "±" << c.monte_carlo.stderr_y
            << " E(y^2)=" << c.monte_carlo.e_y2 << "±" << c.monte_carlo.stderr_y2 << "  z=(" << c.z_y << ", "
            << c.z_y2 << ")" << (c.agree ? "" : "  DISAGREE") << '\n';
        ok = ok && c.agree;
    }
    const auto p0 = relu_moments_paper(0.0);
    const auto q0 = relu_moments_oracle(0.0);
    log << "closed-form E(y^2) at a=0 is " << p0.e_y2 << "; direct integration gives " << q0.e_y2
        << " (difference " << p0.e_y2 - q0.e_y2 << ")\n";
    log << std::defaultfloat;
    if (!ok) {
        log << "quadrature and Monte Carlo disagree beyond " << kOracleAgreementSigmas << " standard errors\n";
        return kExitOracleFailure;
    }
    return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    if (cfg.sweep_steps < 1) throw ConfigError("sweep.steps must be at least 1");
    const auto ds = load_dataset(cfg);
    std::vector<SweepRow> rows;
    for (std::size_t bs : cfg.sweep_batch_sizes) {
        for (double scale : cfg.sweep_init_scales) {
            RunConfig c = cfg;
            c.sgd.batch_size = bs;
            c.sgd.total_steps = cfg.sweep_steps;
            c.sgd.probe_every = std::min(cfg.sgd.probe_every, cfg.sweep_steps);
            c.init_scale = scale;
            const auto spec = c.net_spec(ds.input_dim(), static_cast<std::size_t>(ds.num_classes));
            const auto r = run_training(c, c.variant, ds);

            std::ostringstream name;
            name << "bs" << bs << "_init" << format_csv_double(scale);
            const auto dir = cfg.out / "sweep" / name.str();
            std::filesystem::create_directories(dir);
            write_trace_csv(r.trace, dir / "variance_trace.csv");

            // Shape at initialisation and at the last probe.
            std::vector<long> steps{0};
            if (!r.trace.empty() && r.trace.back().step != 0) steps.push_back(r.trace.back().step);
            for (long step : steps) {
                SweepRow row;
                row.batch_size = bs;
                row.init_scale = scale;
                row.step = step;
                const auto at = rows_at_step(r.trace, step);
                row.exploded = r.exploded() && step == r.explosion.step;
                if (!row.exploded) row.shape = analyze_profile(at, spec.blocks_per_scale());
                rows.push_back(row);
                log << name.str() << " step " << step << ": growth " << row.shape.growth_ok << " decreasing "
                    << row.shape.decreasing_ok << " dip " << row.shape.dip_ok << (row.exploded ? " (exploded)" : "")
                    << '\n';
            }
        }
    }
    write_sweep_summary_csv(rows, cfg.out / "sweep_summary.csv");
    return kExitOk;
}

int run_command(std::string_view name, const RunConfig& cfg, std::ostream& log) {
    try {
        if (name == "predict") return cmd_predict(cfg, log);
        if (name == "train") return cmd_train(cfg, log);
        if (name == "ablate") return cmd_ablate(cfg, log);
        if (name == "verify-moments") return cmd_verify_moments(cfg, log);
        if (name == "sweep") return cmd_sweep(cfg, log);
        log << "unknown command '" << name << "'\n";
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
    }
    return kExitUsage;
}

}  // namespace gradprop

#pragma once

#include <filesystem>
#include <ostream>
#include <string_view>
#include <vector>

#include "gradprop/analysis.hpp"
#include "gradprop/config.hpp"
#include "gradprop/training.hpp"

namespace gradprop {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitExplosion = 2,
    kExitOracleFailure = 3,
};

/// Model initialised from the run seed; every variant draws the same stream.
Model build_model(const RunConfig& cfg, const NetSpec& spec);

/// One training run of `variant` on `ds` with the configured settings.
TrainResult run_training(const RunConfig& cfg, Variant variant, const Dataset& ds);

/// variance_trace.csv, accuracy.csv and a_stats.csv under `dir`.
void write_run_outputs(const TrainResult& r, const std::filesystem::path& dir);
void write_accuracy_csv(const std::vector<TrainRecord>& records, const std::filesystem::path& path);

/// a ∈ {0, 0.25, ..., 2} in both modes, paper rows first.
std::vector<MomentReport> moment_grid();
void write_moments_csv(const std::vector<MomentReport>& rows, const std::filesystem::path& path);
void write_prediction_csv(const std::vector<BlockPrediction>& rows, const std::filesystem::path& path);

struct MomentCheck {
    double a = 0.0;
    ReluMoments paper;
    ReluMoments quadrature;
    MonteCarloMoments monte_carlo;
    double z_y = 0.0;   // |quadrature − MC| / stderr
    double z_y2 = 0.0;
    bool agree = false;  // both z-scores within the tolerance
};

inline constexpr double kOracleAgreementSigmas = 4.0;

/// Quadrature vs Monte Carlo at every grid point; MC seeds derive from `seed`.
std::vector<MomentCheck> verify_moments(const std::vector<double>& grid, std::size_t samples, std::uint64_t seed);
void write_moment_checks_csv(const std::vector<MomentCheck>& rows, const std::filesystem::path& path);

struct SweepRow {
    std::size_t batch_size = 0;
    double init_scale = 0.0;
    long step = 0;
    bool exploded = false;
    ProfileShape shape;

    bool shape_ok() const noexcept { return !exploded && shape.growth_ok && shape.dip_ok; }
};

void write_sweep_summary_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

int cmd_predict(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_ablate(const RunConfig& cfg, std::ostream& log);
int cmd_verify_moments(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);

/// Dispatches by name: predict, train, ablate, verify-moments, sweep.
/// Unknown names, configuration and data errors return kExitUsage with the
/// message written to `log`.
int run_command(std::string_view name, const RunConfig& cfg, std::ostream& log);

}  // namespace gradprop

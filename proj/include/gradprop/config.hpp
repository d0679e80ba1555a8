#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gradprop/analysis.hpp"
#include "gradprop/data.hpp"
#include "gradprop/resnet.hpp"
#include "gradprop/training.hpp"

namespace gradprop {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a command needs. Defaults are the desk-scale setup: a 15-block,
/// 3-scale net (widths 16/32/64, k = 2) on the synthetic task.
struct RunConfig {
    // [net]
    std::vector<std::size_t> widths{16, 32, 64};
    int blocks_per_scale = 5;
    int growth_k = 2;
    Variant variant = Variant::BnResidual;
    double init_scale = 1.0;
    double bn_epsilon = 1e-5;

    // [sgd]
    SgdConfig sgd{1.0, 128, 3000, 100, 0};

    // [data]
    std::string dataset = "synthetic";  // synthetic | cifar10
    std::filesystem::path cifar_dir;
    SyntheticSpec synthetic{10, 64, 10.0, 1.0, 500, 0};

    // [run]
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";

    // [analysis]
    MomentMode mode = MomentMode::Oracle;
    std::size_t mc_samples = 1'000'000;
    std::vector<double> verify_grid{-2.0, -1.0, 0.0, 0.5, 1.0, 2.0};

    // [ablate]
    std::vector<int> ablate_variants{1, 2, 3};

    // [sweep]
    std::vector<std::size_t> sweep_batch_sizes{32, 64, 128};
    std::vector<double> sweep_init_scales{0.1, 1.0};
    long sweep_steps = 500;

    /// Network layout for the configured widths and a dataset shape.
    NetSpec net_spec(std::size_t input_dim, std::size_t num_classes) const;
    /// Training settings with the run seed folded in.
    SgdConfig sgd_config() const;
    /// Synthetic-data settings with the run seed folded in.
    SyntheticSpec synthetic_spec() const;
};

/// Sets one `section.key` entry from its textual value. Unknown keys and
/// malformed values throw ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Current value of `section.key` in the same textual form apply_setting accepts.
std::string get_setting(const RunConfig& cfg, std::string_view key);
/// Every recognised `section.key`, in file order.
std::vector<std::string> setting_keys();

/// Reads `key = value` lines grouped under `[section]` headers on top of the
/// current values in `cfg`. Lists are comma separated.
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Loads the configured dataset (synthetic or CIFAR-10).
Dataset load_dataset(const RunConfig& cfg);

}  // namespace gradprop

// gradprop command-line driver. Talks to the engine only through gradprop.h.

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradprop/gradprop.h"

namespace {

constexpr int kUsageError = 1;

struct Overrides {
    std::string config_path;
    std::optional<std::string> seed, out, mode, variant, dataset, cifar_dir, steps, batch_size;

    std::vector<std::pair<const char*, const std::optional<std::string>*>> entries() const {
        return {{"run.seed", &seed},
                {"run.out", &out},
                {"analysis.mode", &mode},
                {"net.variant", &variant},
                {"data.dataset", &dataset},
                {"data.cifar_dir", &cifar_dir},
                {"sgd.steps", &steps},
                {"sgd.batch_size", &batch_size}};
    }
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "Config file ([section] and key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Run seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--mode", o.mode, "Moment mode for predictions")->check(CLI::IsMember({"paper", "oracle"}));
    cmd->add_option("--variant", o.variant, "1 = BN+residual, 2 = BN only, 3 = residual only")
        ->check(CLI::IsMember({"1", "2", "3"}));
    cmd->add_option("--dataset", o.dataset, "Training data")->check(CLI::IsMember({"synthetic", "cifar10"}));
    cmd->add_option("--cifar-dir", o.cifar_dir, "Directory holding data_batch_{1..5}.bin");
    cmd->add_option("--steps", o.steps, "SGD steps");
    cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
}

void print_log(const char* text, void*) {
    std::fputs(text, stdout);
    std::fflush(stdout);
}

int report(gp_status s, const char* what) {
    std::fprintf(stderr, "gradprop: %s: %s (%s)\n", what, gp_last_error(), gp_status_string(s));
    return kUsageError;
}

int run(const std::string& command, const Overrides& o) {
    gp_config* cfg = nullptr;
    if (auto s = gp_config_create(&cfg); s != GP_OK) return report(s, "config");
    std::unique_ptr<gp_config, decltype(&gp_config_destroy)> guard(cfg, &gp_config_destroy);

    if (!o.config_path.empty())
        if (auto s = gp_config_load_file(cfg, o.config_path.c_str()); s != GP_OK) return report(s, "config file");
    for (const auto& [key, value] : o.entries()) {
        if (!*value) continue;
        if (auto s = gp_config_set(cfg, key, (*value)->c_str()); s != GP_OK) return report(s, key);
    }

    int exit_code = kUsageError;
    if (auto s = gp_run_command(cfg, command.c_str(), print_log, nullptr, &exit_code); s != GP_OK)
        return report(s, command.c_str());
    return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-variance instrumentation for batch-normalized residual networks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(gp_version()));

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"predict", "Write moments.csv and per-block variance predictions"},
        {"train", "Train one model and write its variance trace"},
        {"ablate", "Train models 1/2/3 from a shared seed and summarise"},
        {"verify-moments", "Cross-check ReLU moments by quadrature and Monte Carlo"},
        {"sweep", "Repeat training over batch sizes and init scales"},
    };

    Overrides overrides;
    std::string chosen;
    for (const auto& [name, help] : commands) {
        auto* cmd = app.add_subcommand(name, help);
        add_common_flags(cmd, overrides);
        cmd->callback([&chosen, n = name] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }
    return run(chosen, overrides);
}

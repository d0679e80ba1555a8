#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gradprop/commands.hpp"
#include "support.hpp"

namespace gradprop {
namespace {

using testing::read_file;
using testing::read_lines;
using testing::split_csv;
using testing::TempDir;

RunConfig small_config(const std::filesystem::path& out) {
    RunConfig c;
    c.widths = {8, 16};
    c.blocks_per_scale = 2;
    c.synthetic.input_dim = 6;
    c.synthetic.num_classes = 3;
    c.synthetic.per_class = 40;
    c.sgd.batch_size = 16;
    c.sgd.total_steps = 30;
    c.sgd.probe_every = 10;
    c.sgd.learning_rate = 0.1;
    c.out = out;
    return c;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

TEST(Config, EveryKeyRoundTripsThroughText) {
    RunConfig cfg;
    for (const auto& key : setting_keys()) {
        const auto text = get_setting(cfg, key);
        RunConfig copy;
        ASSERT_NO_THROW(apply_setting(copy, key, text)) << key << " = " << text;
        EXPECT_EQ(get_setting(copy, key), text) << key;
    }
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    RunConfig cfg;
    EXPECT_THROW(apply_setting(cfg, "sgd.learning_rate", "0.1"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "sgd.lr", "fast"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "sgd.batch_size", "-4"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "net.variant", "4"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "analysis.mode", "exact"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "data.dataset", "mnist"), ConfigError);
    EXPECT_THROW(get_setting(cfg, "net.depth"), ConfigError);
}

TEST(Config, SetUpdatesDerivedSettings) {
    RunConfig cfg;
    apply_setting(cfg, "run.seed", "17");
    apply_setting(cfg, "sgd.lr", "0.25");
    apply_setting(cfg, "net.widths", "4, 8, 16, 32");
    EXPECT_EQ(cfg.sgd_config().seed, 17u);
    EXPECT_EQ(cfg.sgd_config().learning_rate, 0.25);
    cfg.sgd.total_steps = 30;
    EXPECT_EQ(cfg.sgd_config().probe_every, 30);
    EXPECT_NE(cfg.synthetic_spec().seed, RunConfig{}.synthetic_spec().seed);
    const auto spec = cfg.net_spec(10, 3);
    EXPECT_EQ(spec.scales.size(), 4u);
    EXPECT_EQ(spec.num_blocks(), 20u);
}

TEST(Config, FileWithSectionsAndLists) {
    TempDir dir("cfg");
    write_text(dir / "run.ini",
               "# desk run\n"
               "[net]\n"
               "widths = [8, 16]\n"
               "variant = 2\n"
               "[sgd]\n"
               "lr = 0.05\n"
               "steps = 12\n"
               "[analysis]\n"
               "mode = paper\n"
               "grid = [0.0, 1.5]\n");
    RunConfig cfg;
    load_config_file(cfg, dir / "run.ini");
    EXPECT_EQ(cfg.widths, (std::vector<std::size_t>{8, 16}));
    EXPECT_EQ(cfg.variant, Variant::BnOnly);
    EXPECT_EQ(cfg.sgd.learning_rate, 0.05);
    EXPECT_EQ(cfg.sgd.total_steps, 12);
    EXPECT_EQ(cfg.mode, MomentMode::PaperFormula);
    EXPECT_EQ(cfg.verify_grid, (std::vector<double>{0.0, 1.5}));
    EXPECT_EQ(cfg.sgd.batch_size, 128u);  // untouched
}

TEST(Config, FileWithUnknownKeyIsRejectedAndLeavesNoPartialState) {
    TempDir dir("cfg_bad");
    write_text(dir / "bad.ini", "[sgd]\nlr = 0.5\nmomentum = 0.9\n");
    RunConfig cfg;
    EXPECT_THROW(load_config_file(cfg, dir / "bad.ini"), ConfigError);
    EXPECT_THROW(load_config_file(cfg, dir / "missing.ini"), ConfigError);
}

TEST(Config, CifarNeedsDirectory) {
    RunConfig cfg;
    cfg.dataset = "cifar10";
    EXPECT_THROW(load_dataset(cfg), ConfigError);
}

TEST(Predict, WritesMomentGridAndOneRowPerBlock) {
    TempDir dir("predict");
    RunConfig cfg;
    cfg.out = dir.path();
    std::ostringstream log;
    ASSERT_EQ(cmd_predict(cfg, log), kExitOk) << log.str();

    const auto moments = read_lines(dir / "moments.csv");
    ASSERT_EQ(moments.size(), 1u + 2u * 9u);
    EXPECT_EQ(moments[0], "a,mode,e_y,e_y2,p_a,c1,c2,eq14_constant");
    bool saw_paper = false, saw_oracle = false;
    for (std::size_t i = 1; i < moments.size(); ++i) {
        const auto cells = split_csv(moments[i]);
        ASSERT_EQ(cells.size(), 8u);
        if (parse_csv_double(cells[0]) != 0.0) continue;
        if (cells[1] == "paper") {
            EXPECT_EQ(parse_csv_double(cells[6]), 1.5);
            saw_paper = true;
        } else {
            EXPECT_NEAR(parse_csv_double(cells[7]), 1.0, 1e-6);
            saw_oracle = true;
        }
    }
    EXPECT_TRUE(saw_paper && saw_oracle);

    const auto pred = read_lines(dir / "prediction.csv");
    ASSERT_EQ(pred.size(), 1u + 15u);
    EXPECT_EQ(pred[0],
              "block_index,scale_index,forward_variance_paper,forward_variance_oracle,backward_lower,backward_upper,"
              "k_estimate,simplified_ratio");
    for (std::size_t i = 1; i < pred.size(); ++i) {
        const auto cells = split_csv(pred[i]);
        ASSERT_EQ(cells.size(), 8u);
        EXPECT_EQ(std::stoi(cells[0]), static_cast<int>(i));
        for (const auto& c : cells) EXPECT_NO_THROW(parse_csv_double(c));
    }
}

TEST(Train, WritesReadableArtifacts) {
    TempDir dir("train");
    const auto cfg = small_config(dir.path());
    std::ostringstream log;
    ASSERT_EQ(cmd_train(cfg, log), kExitOk) << log.str();
    const auto trace = read_trace_csv(dir / "variance_trace.csv");
    EXPECT_EQ(trace.size(), 4u * 4u);  // steps 0, 10, 20, 29
    const auto acc = read_lines(dir / "accuracy.csv");
    EXPECT_EQ(acc[0], "step,loss,train_accuracy");
    EXPECT_EQ(acc.size(), 31u);
    for (std::size_t i = 1; i < acc.size(); ++i) {
        const auto cells = split_csv(acc[i]);
        ASSERT_EQ(cells.size(), 3u);
        EXPECT_EQ(std::stol(cells[0]), static_cast<long>(i - 1));
        EXPECT_TRUE(std::isfinite(parse_csv_double(cells[1])));
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "a_stats.csv"));
}

TEST(Train, UnnormalizedDeepNetExitsWithExplosionCode) {
    TempDir dir("train_m3");
    RunConfig cfg;
    cfg.out = dir.path();
    cfg.variant = Variant::ResidualOnly;
    cfg.sgd.total_steps = 20;
    cfg.sgd.probe_every = 5;
    std::ostringstream log;
    EXPECT_EQ(cmd_train(cfg, log), kExitExplosion) << log.str();
    const auto trace = read_trace_csv(dir / "variance_trace.csv");
    ASSERT_FALSE(trace.empty());
    bool marked = false;
    for (const auto& row : rows_at_step(trace, trace.back().step)) marked = marked || !row.finite();
    EXPECT_TRUE(marked);
}

TEST(Ablate, SingleVariantMatchesTrainExactly) {
    TempDir dir("ablate");
    auto cfg = small_config(dir / "train");
    std::ostringstream log;
    ASSERT_EQ(cmd_train(cfg, log), kExitOk);
    cfg.out = dir / "ablate";
    cfg.ablate_variants = {1};
    ASSERT_EQ(cmd_ablate(cfg, log), kExitOk);
    for (const char* f : {"variance_trace.csv", "accuracy.csv", "a_stats.csv"})
        EXPECT_EQ(read_file(dir / "train" / f), read_file(dir / "ablate" / "model1" / f)) << f;
    const auto summary = read_lines(dir / "ablate" / "summary.csv");
    ASSERT_EQ(summary.size(), 2u);
    EXPECT_EQ(summary[0], "variant,final_train_accuracy,exploded");
    EXPECT_EQ(split_csv(summary[1])[0], "1");
}

TEST(Ablate, VariantsStartFromSharedTensors) {
    TempDir dir("ablate_all");
    auto cfg = small_config(dir.path());
    cfg.sgd.total_steps = 1;
    cfg.sgd.probe_every = 1;
    std::ostringstream log;
    ASSERT_EQ(cmd_ablate(cfg, log), kExitOk) << log.str();
    EXPECT_EQ(read_lines(dir / "summary.csv").size(), 4u);

    // The forward pass of Model-1 and Model-2 differs by the shortcut, so the
    // step-0 losses differ; what is shared is every common tensor.
    std::map<std::string, std::vector<double>> seen;
    for (int v : {1, 2, 3}) {
        auto c = cfg;
        c.variant = static_cast<Variant>(v);
        const auto m = build_model(c, c.net_spec(6, 3));
        for_each_tensor(m, [&](const std::string& name, TensorShape, std::span<const double> t) {
            const std::vector<double> values(t.begin(), t.end());
            const auto [it, inserted] = seen.emplace(name, values);
            if (!inserted) {
                EXPECT_EQ(it->second, values) << name << " in model " << v;
            }
        });
    }
}

TEST(VerifyMoments, PassesAndWritesReport) {
    TempDir dir("verify");
    RunConfig cfg;
    cfg.out = dir.path();
    cfg.mc_samples = 200'000;
    std::ostringstream log;
    EXPECT_EQ(cmd_verify_moments(cfg, log), kExitOk) << log.str();
    const auto lines = read_lines(dir / "verify_moments.csv");
    EXPECT_EQ(lines.size(), 1u + cfg.verify_grid.size());
    EXPECT_NE(log.str().find("difference"), std::string::npos);
}

TEST(Sweep, OneTracePerSettingAndSummary) {
    TempDir dir("sweep");
    auto cfg = small_config(dir.path());
    cfg.sweep_batch_sizes = {8, 16};
    cfg.sweep_init_scales = {0.1, 1.0};
    cfg.sweep_steps = 6;
    cfg.sgd.probe_every = 5;
    std::ostringstream log;
    ASSERT_EQ(cmd_sweep(cfg, log), kExitOk) << log.str();
    for (const char* name : {"bs8_init0.1", "bs8_init1", "bs16_init0.1", "bs16_init1"})
        EXPECT_FALSE(read_trace_csv(dir / "sweep" / name / "variance_trace.csv").empty()) << name;
    EXPECT_EQ(read_lines(dir / "sweep_summary.csv").size(), 1u + 4u * 2u);
}

TEST(Commands, RepeatedRunsAreBitIdentical) {
    TempDir dir("determinism");
    auto cfg = small_config(dir / "a");
    std::ostringstream log;
    ASSERT_EQ(cmd_train(cfg, log), kExitOk);
    ASSERT_EQ(cmd_predict(cfg, log), kExitOk);
    cfg.out = dir / "b";
    ASSERT_EQ(cmd_train(cfg, log), kExitOk);
    ASSERT_EQ(cmd_predict(cfg, log), kExitOk);
    for (const char* f : {"variance_trace.csv", "accuracy.csv", "a_stats.csv", "moments.csv", "prediction.csv"})
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST(Commands, DispatchAndErrors) {
    TempDir dir("dispatch");
    RunConfig cfg;
    cfg.out = dir.path();
    std::ostringstream log;
    EXPECT_EQ(run_command("unknown", cfg, log), kExitUsage);
    cfg.dataset = "cifar10";
    EXPECT_EQ(run_command("train", cfg, log), kExitUsage);
    EXPECT_NE(log.str().find("cifar_dir"), std::string::npos);
}

}  // namespace
}  // namespace gradprop

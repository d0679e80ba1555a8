#include "gradprop/config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

namespace gradprop {

NetSpec RunConfig::net_spec(std::size_t input_dim, std::size_t num_classes) const {
    NetSpec spec;
    for (std::size_t w : widths) spec.scales.push_back({blocks_per_scale, w});
    spec.growth_k = growth_k;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    spec.variant = variant;
    spec.init_scale = init_scale;
    spec.bn_epsilon = bn_epsilon;
    spec.validate();
    return spec;
}

SgdConfig RunConfig::sgd_config() const {
    SgdConfig c = sgd;
    c.seed = seed;
    // A short run still gets its step-0 and last-step probes.
    if (c.total_steps > 0) c.probe_every = std::min(c.probe_every, c.total_steps);
    return c;
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s = synthetic;
    s.seed = SeededRng(seed).fork(3).seed();
    return s;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string_view::npos ? s.size() : comma;
        auto item = trim(s.substr(start, end - start));
        if (!item.empty()) out.push_back(std::move(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    const auto t = trim(text);
    T v{};
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError(std::string(key) + ": cannot parse '" + t + "'");
    return v;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
    if (out.empty()) throw ConfigError(std::string(key) + ": empty list");
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += format_csv_double(v[i]);
        } else {
            out += std::to_string(v[i]);
        }
    }
    return out;
}

template <typename T>
T positive(std::string_view key, T v) {
    if (!(v > T{})) throw ConfigError(std::string(key) + ": must be positive");
    return v;
}

struct Field {
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Ordered by section so setting_keys() reads like a config file.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"net.widths",
         {[](RunConfig& c, std::string_view v) {
              auto w = parse_list<std::size_t>("net.widths", v);
              for (auto x : w) positive("net.widths", x);
              c.widths = std::move(w);
          },
          [](const RunConfig& c) { return join_list(c.widths); }}},
        {"net.blocks",
         {[](RunConfig& c, std::string_view v) { c.blocks_per_scale = positive("net.blocks", parse_number<int>("net.blocks", v)); },
          [](const RunConfig& c) { return std::to_string(c.blocks_per_scale); }}},
        {"net.k",
         {[](RunConfig& c, std::string_view v) { c.growth_k = positive("net.k", parse_number<int>("net.k", v)); },
          [](const RunConfig& c) { return std::to_string(c.growth_k); }}},
        {"net.variant",
         {[](RunConfig& c, std::string_view v) {
              try {
                  c.variant = parse_variant(trim(v));
              } catch (const std::exception& e) {
                  throw ConfigError(std::string("net.variant: ") + e.what());
              }
          },
          [](const RunConfig& c) { return std::to_string(static_cast<int>(c.variant)); }}},
        {"net.init_scale",
         {[](RunConfig& c, std::string_view v) { c.init_scale = positive("net.init_scale", parse_number<double>("net.init_scale", v)); },
          [](const RunConfig& c) { return format_csv_double(c.init_scale); }}},
        {"net.bn_epsilon",
         {[](RunConfig& c, std::string_view v) { c.bn_epsilon = positive("net.bn_epsilon", parse_number<double>("net.bn_epsilon", v)); },
          [](const RunConfig& c) { return format_csv_double(c.bn_epsilon); }}},

        {"sgd.lr",
         {[](RunConfig& c, std::string_view v) { c.sgd.learning_rate = positive("sgd.lr", parse_number<double>("sgd.lr", v)); },
          [](const RunConfig& c) { return format_csv_double(c.sgd.learning_rate); }}},
        {"sgd.batch_size",
         {[](RunConfig& c, std::string_view v) { c.sgd.batch_size = parse_number<std::size_t>("sgd.batch_size", v); },
          [](const RunConfig& c) { return std::to_string(c.sgd.batch_size); }}},
        {"sgd.steps",
         {[](RunConfig& c, std::string_view v) { c.sgd.total_steps = parse_number<long>("sgd.steps", v); },
          [](const RunConfig& c) { return std::to_string(c.sgd.total_steps); }}},
        {"sgd.probe_every",
         {[](RunConfig& c, std::string_view v) { c.sgd.probe_every = parse_number<long>("sgd.probe_every", v); },
          [](const RunConfig& c) { return std::to_string(c.sgd.probe_every); }}},

        {"data.dataset",
         {[](RunConfig& c, std::string_view v) {
              const auto d = trim(v);
              if (d != "synthetic" && d != "cifar10") throw ConfigError("data.dataset: expected synthetic or cifar10, got '" + d + "'");
              c.dataset = d;
          },
          [](const RunConfig& c) { return c.dataset; }}},
        {"data.cifar_dir",
         {[](RunConfig& c, std::string_view v) { c.cifar_dir = trim(v); },
          [](const RunConfig& c) { return c.cifar_dir.string(); }}},
        {"data.num_classes",
         {[](RunConfig& c, std::string_view v) {
              const int n = parse_number<int>("data.num_classes", v);
              if (n < 2) throw ConfigError("data.num_classes: need at least 2");
              c.synthetic.num_classes = n;
          },
          [](const RunConfig& c) { return std::to_string(c.synthetic.num_classes); }}},
        {"data.input_dim",
         {[](RunConfig& c, std::string_view v) { c.synthetic.input_dim = positive("data.input_dim", parse_number<std::size_t>("data.input_dim", v)); },
          [](const RunConfig& c) { return std::to_string(c.synthetic.input_dim); }}},
        {"data.radius",
         {[](RunConfig& c, std::string_view v) { c.synthetic.radius = positive("data.radius", parse_number<double>("data.radius", v)); },
          [](const RunConfig& c) { return format_csv_double(c.synthetic.radius); }}},
        {"data.sigma",
         {[](RunConfig& c, std::string_view v) { c.synthetic.sigma = positive("data.sigma", parse_number<double>("data.sigma", v)); },
          [](const RunConfig& c) { return format_csv_double(c.synthetic.sigma); }}},
        {"data.per_class",
         {[](RunConfig& c, std::string_view v) { c.synthetic.per_class = positive("data.per_class", parse_number<std::size_t>("data.per_class", v)); },
          [](const RunConfig& c) { return std::to_string(c.synthetic.per_class); }}},

        {"run.seed",
         {[](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("run.seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"run.out",
         {[](RunConfig& c, std::string_view v) {
              const auto p = trim(v);
              if (p.empty()) throw ConfigError("run.out: empty path");
              c.out = p;
          },
          [](const RunConfig& c) { return c.out.string(); }}},

        {"analysis.mode",
         {[](RunConfig& c, std::string_view v) {
              try {
                  c.mode = parse_mode(trim(v));
              } catch (const std::exception& e) {
                  throw ConfigError(std::string("analysis.mode: ") + e.what());
              }
          },
          [](const RunConfig& c) { return std::string(mode_name(c.mode)); }}},
        {"analysis.mc_samples",
         {[](RunConfig& c, std::string_view v) {
              const auto n = parse_number<std::size_t>("analysis.mc_samples", v);
              if (n < 2) throw ConfigError("analysis.mc_samples: need at least 2");
              c.mc_samples = n;
          },
          [](const RunConfig& c) { return std::to_string(c.mc_samples); }}},
        {"analysis.grid",
         {[](RunConfig& c, std::string_view v) { c.verify_grid = parse_list<double>("analysis.grid", v); },
          [](const RunConfig& c) { return join_list(c.verify_grid); }}},

        {"ablate.variants",
         {[](RunConfig& c, std::string_view v) {
              std::vector<int> out;
              for (const auto& item : split_list(v)) {
                  try {
                      out.push_back(static_cast<int>(parse_variant(item)));
                  } catch (const std::exception& e) {
                      throw ConfigError(std::string("ablate.variants: ") + e.what());
                  }
              }
              if (out.empty()) throw ConfigError("ablate.variants: empty list");
              c.ablate_variants = std::move(out);
          },
          [](const RunConfig& c) { return join_list(c.ablate_variants); }}},

        {"sweep.batch_sizes",
         {[](RunConfig& c, std::string_view v) { c.sweep_batch_sizes = parse_list<std::size_t>("sweep.batch_sizes", v); },
          [](const RunConfig& c) { return join_list(c.sweep_batch_sizes); }}},
        {"sweep.init_scales",
         {[](RunConfig& c, std::string_view v) {
              auto s = parse_list<double>("sweep.init_scales", v);
              for (double x : s) positive("sweep.init_scales", x);
              c.sweep_init_scales = std::move(s);
          },
          [](const RunConfig& c) { return join_list(c.sweep_init_scales); }}},
        {"sweep.steps",
         {[](RunConfig& c, std::string_view v) { c.sweep_steps = parse_number<long>("sweep.steps", v); },
          [](const RunConfig& c) { return std::to_string(c.sweep_steps); }}},
    };
    return table;
}

const Field& find_field(std::string_view key) {
    for (const auto& [name, field] : fields())
        if (name == key) return field;
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    find_field(key).set(cfg, value);
}

std::string get_setting(const RunConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

std::vector<std::string> setting_keys() {
    std::vector<std::string> keys;
    for (const auto& [name, field] : fields()) keys.push_back(name);
    return keys;
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_file(path.string());
    } catch (const CLI::Error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    for (const auto& item : items) {
        // The reader brackets every section with "++" / "--" marker items.
        if (item.name == "++" || item.name == "--") continue;
        const auto key = item.fullname();
        std::string value;
        for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
        try {
            apply_setting(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
}

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.dataset == "cifar10") {
        if (cfg.cifar_dir.empty()) throw ConfigError("data.cifar_dir must be set for the cifar10 dataset");
        return load_cifar10_binary(cifar10_train_files(cfg.cifar_dir));
    }
    auto ds = generate_synthetic(cfg.synthetic_spec());
    standardize(ds);
    return ds;
}

}  // namespace gradprop

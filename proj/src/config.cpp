#include "mcdrop/config.hpp"

#include "mcdrop/text.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>

namespace mcdrop {
namespace {

template <typename T>
T parse_value(std::string_view key, std::string_view value) {
  T out{};
  if (!parse_number(value, out)) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected true/false)");
}

template <typename F>
auto wrap_enum(std::string_view key, std::string_view value, F parse) {
  try {
    return parse(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

struct Option {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;  // empty: not serialized
};

template <typename T>
std::string str(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

#define MCDROP_NUMBER(KEY, FIELD)                                                                          \
  Option {                                                                                                 \
    KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_value<decltype(c.FIELD)>(KEY, v); },      \
        [](const RunConfig& c) { return str(c.FIELD); }                                                    \
  }
#define MCDROP_STRING(KEY, FIELD)                                                                  \
  Option {                                                                                         \
    KEY, [](RunConfig& c, std::string_view v) { c.FIELD = std::string(v); },                       \
        [](const RunConfig& c) { return c.FIELD; }                                                 \
  }

const std::vector<Option>& options() {
  static const std::vector<Option> table{
      MCDROP_STRING("dataset.kind", dataset.kind),
      MCDROP_NUMBER("dataset.n", dataset.n),
      MCDROP_NUMBER("dataset.classes", dataset.classes),
      MCDROP_NUMBER("dataset.overlap", dataset.overlap),
      MCDROP_NUMBER("dataset.dim", dataset.dim),
      MCDROP_NUMBER("dataset.noise", dataset.noise),
      MCDROP_NUMBER("dataset.size", dataset.size),
      MCDROP_STRING("dataset.path", dataset.path),
      MCDROP_STRING("dataset.label_column", dataset.label_column),
      MCDROP_STRING("dataset.images", dataset.images),
      MCDROP_STRING("dataset.labels", dataset.labels),
      Option{"dataset.seed",
             [](RunConfig& c, std::string_view v) { c.dataset.seed = parse_value<std::uint64_t>("dataset.seed", v); },
             [](const RunConfig& c) { return c.dataset.seed ? std::to_string(*c.dataset.seed) : std::string(); }},
      MCDROP_NUMBER("dataset.train", dataset.train),
      MCDROP_NUMBER("dataset.val", dataset.val),
      MCDROP_NUMBER("dataset.test", dataset.test),
      Option{"model.variant",
             [](RunConfig& c, std::string_view v) { c.model.variant = wrap_enum("model.variant", v, parse_variant); },
             [](const RunConfig& c) { return std::string(to_string(c.model.variant)); }},
      Option{"model.backbone",
             [](RunConfig& c, std::string_view v) { c.model.backbone = wrap_enum("model.backbone", v, parse_backbone); },
             [](const RunConfig& c) { return std::string(to_string(c.model.backbone)); }},
      MCDROP_NUMBER("model.dropout", model.dropout),
      MCDROP_NUMBER("model.width", model.width),
      Option{"training.optimizer",
             [](RunConfig& c, std::string_view v) {
               c.training.optimizer.kind = wrap_enum("training.optimizer", v, parse_optimizer_kind);
             },
             [](const RunConfig& c) { return std::string(to_string(c.training.optimizer.kind)); }},
      MCDROP_NUMBER("training.lr", training.optimizer.lr),
      MCDROP_NUMBER("training.momentum", training.optimizer.momentum),
      MCDROP_NUMBER("training.beta1", training.optimizer.beta1),
      MCDROP_NUMBER("training.beta2", training.optimizer.beta2),
      MCDROP_NUMBER("training.eps", training.optimizer.eps),
      MCDROP_NUMBER("training.epochs", training.epochs),
      MCDROP_NUMBER("training.batch_size", training.batch_size),
      MCDROP_NUMBER("training.kld_weight", training.kld_weight),
      MCDROP_NUMBER("training.samples_per_step", training.samples_per_step),
      Option{"training.check_finite",
             [](RunConfig& c, std::string_view v) { c.training.check_finite = parse_bool("training.check_finite", v); },
             [](const RunConfig& c) { return std::string(c.training.check_finite ? "true" : "false"); }},
      MCDROP_NUMBER("uncertainty.T", uncertainty.passes),
      MCDROP_NUMBER("uncertainty.S", uncertainty.draws),
      Option{"uncertainty.threads",
             [](RunConfig& c, std::string_view v) { c.uncertainty.threads = parse_value<unsigned>("uncertainty.threads", v); },
             nullptr},
      MCDROP_NUMBER("run.seed", seed),
      Option{"run.out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); }, nullptr},
  };
  return table;
}

#undef MCDROP_NUMBER
#undef MCDROP_STRING

}  // namespace

void set_option(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& o : options()) {
    if (o.key == key) {
      o.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside a [section]");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    try {
      set_option(base, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_config(text, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& o : options()) {
    if (!o.get) continue;
    const std::string value = o.get(cfg);
    if (value.empty()) continue;
    const auto dot = o.key.find('.');
    const std::string s(o.key.substr(0, dot));
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += std::string(o.key.substr(dot + 1)) + " = " + value + "\n";
  }
  return out;
}

void validate(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  const auto& d = cfg.dataset;
  require(d.kind == "blobs" || d.kind == "textures" || d.kind == "csv" || d.kind == "idx",
          "dataset.kind must be blobs, textures, csv or idx");
  require(d.overlap >= 0.0 && d.overlap <= 1.0, "dataset.overlap must lie in [0, 1]");
  require(d.noise >= 0.0 && std::isfinite(d.noise), "dataset.noise must be nonnegative");
  require(d.classes >= 2, "dataset.classes must be at least 2");
  require(d.n >= d.classes, "dataset.n must be at least dataset.classes");
  require(d.dim >= 2, "dataset.dim must be at least 2");
  require(d.size >= 8, "dataset.size must be at least 8");
  require(d.train > 0.0 && d.val >= 0.0 && d.test > 0.0 && std::abs(d.train + d.val + d.test - 1.0) < 1e-9,
          "dataset split fractions must be positive and sum to 1");
  if (d.kind == "csv") require(!d.path.empty(), "dataset.path is required for csv");
  if (d.kind == "idx") require(!d.images.empty() && !d.labels.empty(), "dataset.images and dataset.labels are required for idx");
  require(cfg.model.dropout >= 0.0 && cfg.model.dropout < 1.0, "model.dropout must lie in [0, 1)");
  require(cfg.model.width >= 1, "model.width must be positive");
  const auto& t = cfg.training;
  require(t.optimizer.lr >= 0.0, "training.lr must be nonnegative");
  require(t.epochs >= 1, "training.epochs must be at least 1");
  require(t.batch_size >= 1, "training.batch_size must be at least 1");
  require(t.kld_weight >= 0.0, "training.kld_weight must be nonnegative");
  require(t.samples_per_step >= 1, "training.samples_per_step must be at least 1");
  require(cfg.uncertainty.passes >= 2, "uncertainty.T must be at least 2");
  require(cfg.uncertainty.draws >= 0, "uncertainty.S must be nonnegative");
}

std::uint64_t dataset_seed(const RunConfig& cfg) { return cfg.dataset.seed.value_or(cfg.seed); }

Dataset make_dataset(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "blobs") return synth_blobs(d.n, d.classes, d.overlap, d.dim, dataset_seed(cfg));
  if (d.kind == "textures") return synth_textures(d.n, d.noise, dataset_seed(cfg), d.size);
  if (d.kind == "csv") return load_csv(d.path, d.label_column);
  if (d.kind == "idx") return load_idx(d.images, d.labels);
  throw ConfigError("unknown dataset.kind '" + d.kind + "'");
}

Splits make_splits(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  return split(make_dataset(cfg), SplitSpec{.train = d.train, .val = d.val, .test = d.test, .seed = dataset_seed(cfg)});
}

ArchitectureOptions architecture(const RunConfig& cfg) {
  return {.width = cfg.model.width, .dropout_rate = cfg.model.dropout};
}

EvalConfig eval_config(const RunConfig& cfg) {
  return {.passes = cfg.uncertainty.passes, .draws = cfg.uncertainty.draws, .seed = cfg.seed,
          .threads = cfg.uncertainty.threads};
}

}  // namespace mcdrop

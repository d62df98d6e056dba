#include "mcdrop/cli.hpp"

#include "mcdrop/checkpoint.hpp"
#include "mcdrop/config.hpp"
#include "mcdrop/report.hpp"
#include "mcdrop/text.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <optional>
#include <utility>

namespace mcdrop {
namespace {

namespace fs = std::filesystem;

/// Flag values are kept as text and applied through set_option, so flags and
/// config files share one parser and one set of error messages.
struct Overrides {
  std::deque<std::pair<std::string, std::optional<std::string>>> slots;  // stable addresses for CLI11
  std::vector<std::string> sets;

  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    slots.emplace_back(key, std::nullopt);
    app->add_option(name, slots.back().second, help + " (" + key + ")");
  }
  void apply(RunConfig& cfg) const {
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      set_option(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : slots) {
      if (value) set_option(cfg, key, *value);
    }
  }
};

struct Common {
  std::string config_path;
  Overrides overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Config file ([section] key = value)");
  c.overrides.flag(app, "--seed", "run.seed", "Run seed");
  c.overrides.flag(app, "--out", "run.out", "Output directory");
  app->add_option("--set", c.overrides.sets, "Override any config key: section.key=value");
}

void add_dataset_flags(CLI::App* app, Common& c) {
  c.overrides.flag(app, "--kind", "dataset.kind", "Dataset kind: blobs, textures, csv, idx");
  c.overrides.flag(app, "--n", "dataset.n", "Number of examples");
  c.overrides.flag(app, "--classes", "dataset.classes", "Number of classes (blobs)");
  c.overrides.flag(app, "--overlap", "dataset.overlap", "Blob overlap in [0, 1]");
  c.overrides.flag(app, "--dim", "dataset.dim", "Blob dimension");
  c.overrides.flag(app, "--noise", "dataset.noise", "Texture pixel noise");
  c.overrides.flag(app, "--size", "dataset.size", "Texture side length");
  c.overrides.flag(app, "--data", "dataset.path", "CSV file");
  c.overrides.flag(app, "--images", "dataset.images", "IDX image file");
  c.overrides.flag(app, "--labels", "dataset.labels", "IDX label file");
  c.overrides.flag(app, "--data-seed", "dataset.seed", "Dataset and split seed (default: run seed)");
}

void add_model_flags(CLI::App* app, Common& c) {
  c.overrides.flag(app, "--backbone", "model.backbone", "Backbone: mlp or resnet");
  c.overrides.flag(app, "--dropout", "model.dropout", "Dropout rate p");
  c.overrides.flag(app, "--width", "model.width", "MLP hidden width");
  c.overrides.flag(app, "--optimizer", "training.optimizer", "adam or sgd-momentum");
  c.overrides.flag(app, "--lr", "training.lr", "Learning rate");
  c.overrides.flag(app, "--epochs", "training.epochs", "Training epochs");
  c.overrides.flag(app, "--batch-size", "training.batch_size", "Minibatch size");
  c.overrides.flag(app, "--kld-weight", "training.kld_weight", "KLD weight beta");
}

void add_uncertainty_flags(CLI::App* app, Common& c) {
  c.overrides.flag(app, "--T", "uncertainty.T", "MC dropout passes");
  c.overrides.flag(app, "--S", "uncertainty.S", "Variational samples for the sampled score");
  c.overrides.flag(app, "--threads", "uncertainty.threads", "Worker threads for MC passes (0 = all cores)");
}

RunConfig resolve(const Common& c, RunConfig base = {}) {
  RunConfig cfg = c.config_path.empty() ? std::move(base) : load_config(c.config_path, std::move(base));
  c.overrides.apply(cfg);
  validate(cfg);
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error(cfg.out + ": cannot create output directory");
  return dir;
}

/// Pins the data seed so a stored config regenerates the same data even if
/// the run seed is later overridden.
RunConfig pinned(RunConfig cfg) {
  cfg.dataset.seed = dataset_seed(cfg);
  return cfg;
}

using Panels = std::vector<std::pair<Variant, const UncertaintyReport*>>;

void write_reports(const fs::path& dir, Variant variant, const Evaluation& eval) {
  const Panels panels{{variant, &eval.report}};
  write_file_atomic(dir / "per_example.csv", per_example_csv(eval.report));
  write_file_atomic(dir / "metrics.csv", metrics_csv(variant, eval));
  write_file_atomic(dir / "histogram.csv", histogram_csv(panels));
  write_file_atomic(dir / "uncertainty_box.svg", uncertainty_box_svg(panels));
  write_file_atomic(dir / "uncertainty_hist.svg", uncertainty_hist_svg(panels));
}

std::string ratio_text(const std::optional<double>& r) { return r ? format_double(*r) : "undefined"; }

int cmd_generate(const Common& c, std::ostream& out) {
  const RunConfig cfg = pinned(resolve(c));
  const Dataset ds = make_dataset(cfg);
  const fs::path dir = prepare_out(cfg);
  save_csv(ds, dir / "dataset.csv");
  if (ds.inputs.rank() == 4) save_idx(ds, dir / "images.idx", dir / "labels.idx");
  write_file_atomic(dir / "config.txt", serialize_config(cfg));
  out << "generated " << to_string(ds.provenance) << ": N=" << ds.size() << " C=" << ds.classes()
      << " example shape " << to_string(ds.example_shape()) << "\nclass counts:";
  for (Index k : ds.class_counts()) out << " " << k;
  out << "\nwrote " << (dir / "dataset.csv").string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::optional<std::string>& variant, std::ostream& out) {
  RunConfig cfg = resolve(c);
  if (variant) set_option(cfg, "model.variant", *variant);
  cfg = pinned(cfg);
  const Splits data = make_splits(cfg);
  const ModelSpec spec = make_model_spec(cfg.model.variant, cfg.model.backbone, data.train.example_shape(),
                                         data.train.classes(), architecture(cfg));
  TrainConfig tc = cfg.training;
  tc.seed = cfg.seed;
  const TrainResult result = train(spec, build_model(spec, cfg.seed), data.train, data.val, tc);

  const fs::path dir = prepare_out(cfg);
  const std::string name(to_string(spec.variant));
  save_checkpoint({.spec = spec,
                   .params = result.params,
                   .meta = {.seed = cfg.seed,
                            .epochs = cfg.training.epochs,
                            .final_loss = result.final_loss,
                            .config = serialize_config(cfg)}},
                  dir / "checkpoint.bin");
  write_file_atomic(dir / "train_log.csv", train_log_csv(result.log));
  out << "trained " << name << " (" << dropout_layer_count(spec) << " dropout layers, " << result.params.parameter_count()
      << " parameters): best epoch " << result.best_epoch << ", final training loss " << format_double(result.final_loss)
      << "\nwrote " << (dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  RunConfig base;
  try {
    base = parse_config(ckpt.meta.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(checkpoint + ": embedded config: " + e.what());
  }
  const RunConfig cfg = resolve(c, base);
  const Splits data = make_splits(cfg);
  const Evaluation eval = evaluate(ckpt.params, ckpt.spec, data.test, eval_config(cfg));
  const fs::path dir = prepare_out(cfg);
  const std::string name(to_string(ckpt.spec.variant));
  write_reports(dir, ckpt.spec.variant, eval);
  out << name << ": accuracy " << format_double(eval.metrics.accuracy) << ", macro F1 "
      << format_double(eval.metrics.macro_f1) << ", " << to_string(eval.report.method) << " ratio "
      << ratio_text(eval.report.ratio) << "\n";
  return 0;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_comparison(std::ostream& out, const std::vector<ComparisonSummary>& summary) {
  out << "variant      accuracy  macro_f1  ratio (mean [min, max] over seeds)\n";
  for (const auto& s : summary) {
    std::string name(to_string(s.variant));
    name.resize(12, ' ');
    out << name << " " << fixed(s.accuracy.mean) << "    " << fixed(s.macro_f1.mean) << "    ";
    if (s.ratio.count > 0) {
      out << fixed(s.ratio.mean, 3) << " [" << fixed(s.ratio.min, 3) << ", " << fixed(s.ratio.max, 3) << "]";
    } else {
      out << "undefined";
    }
    out << "\n";
  }
}

int cmd_compare(const Common& c, Index seeds, const std::string& checkpoint_dir, std::ostream& out) {
  if (seeds < 1) throw ConfigError("--seeds must be at least 1");
  std::vector<Checkpoint> checkpoints;
  RunConfig base;
  if (!checkpoint_dir.empty()) {
    for (Variant v : ComparisonConfig{}.variants) {
      const fs::path p = fs::path(checkpoint_dir) / to_string(v) / "checkpoint.bin";
      if (!fs::exists(p)) {
        throw std::runtime_error("missing checkpoint for variant " + std::string(to_string(v)) + ": " + p.string());
      }
      checkpoints.push_back(load_checkpoint(p));
    }
    base = parse_config(checkpoints.front().meta.config);
  }
  const RunConfig cfg = pinned(resolve(c, base));
  const Splits data = make_splits(cfg);

  Comparison cmp;
  if (checkpoints.empty()) {
    ComparisonConfig cc{.backbone = cfg.model.backbone,
                        .architecture = architecture(cfg),
                        .training = cfg.training,
                        .evaluation = eval_config(cfg),
                        .seeds = {}};
    for (Index s = 0; s < seeds; ++s) cc.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(s));
    cmp = compare_variants(data, cc);
  } else {
    for (const auto& ck : checkpoints) {
      EvalConfig ec = eval_config(cfg);
      ec.seed = ck.meta.seed;
      VariantRun run{.variant = ck.spec.variant, .seed = ck.meta.seed, .spec = ck.spec};
      run.training.params = ck.params;
      run.evaluation = evaluate(ck.params, ck.spec, data.test, ec);
      cmp.rows.push_back(comparison_row(run.variant, run.seed, run.evaluation));
      cmp.runs.push_back(std::move(run));
    }
    cmp.summary = summarize_rows(cmp.rows);
  }

  const fs::path dir = prepare_out(cfg);
  Panels panels;
  for (const auto& run : cmp.runs) {
    const std::string tag = std::string(to_string(run.variant)) + "_seed" + std::to_string(run.seed);
    write_file_atomic(dir / ("per_example_" + tag + ".csv"), per_example_csv(run.evaluation.report));
    if (!run.training.log.empty()) write_file_atomic(dir / ("train_log_" + tag + ".csv"), train_log_csv(run.training.log));
    if (run.seed == cmp.runs.front().seed) panels.emplace_back(run.variant, &run.evaluation.report);
  }
  write_file_atomic(dir / "comparison.csv", comparison_csv(cmp.rows, cmp.summary));
  write_file_atomic(dir / "histogram.csv", histogram_csv(panels));
  write_file_atomic(dir / "uncertainty_box.svg", uncertainty_box_svg(panels));
  write_file_atomic(dir / "uncertainty_hist.svg", uncertainty_hist_svg(panels));
  write_file_atomic(dir / "config.txt", serialize_config(cfg));
  print_comparison(out, cmp.summary);
  out << "wrote " << (dir / "comparison.csv").string() << "\n";
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo dropout and variational uncertainty for classifiers", "mcdrop"};
  app.require_subcommand(1);

  Common gen, tr, ev, cmp;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset (CSV, plus IDX for textures)");
  add_common(generate, gen);
  add_dataset_flags(generate, gen);

  auto* train_cmd = app.add_subcommand("train", "Train one variant and write a checkpoint and training log");
  add_common(train_cmd, tr);
  add_dataset_flags(train_cmd, tr);
  add_model_flags(train_cmd, tr);
  std::optional<std::string> variant;
  train_cmd->add_option("--variant", variant, "baseline, bayesian1, bayesian2 or variational (model.variant)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on its test split and write reports");
  add_common(evaluate_cmd, ev);
  add_uncertainty_flags(evaluate_cmd, ev);
  std::string checkpoint;
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();

  auto* compare = app.add_subcommand("compare", "Train or load all four variants and write the comparison table");
  add_common(compare, cmp);
  add_dataset_flags(compare, cmp);
  add_model_flags(compare, cmp);
  add_uncertainty_flags(compare, cmp);
  Index seeds = 1;
  std::string checkpoint_dir;
  compare->add_option("--seeds", seeds, "Number of seeds, starting at the run seed");
  compare->add_option("--checkpoint-dir", checkpoint_dir, "Evaluate DIR/<variant>/checkpoint.bin for every variant instead of training");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, variant, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(ev, checkpoint, out);
    return cmd_compare(cmp, seeds, checkpoint_dir, out);
  } catch (const ConfigError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace mcdrop

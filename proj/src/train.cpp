#include "mcdrop/train.hpp"

#include "mcdrop/ops.hpp"
#include "mcdrop/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcdrop {
namespace {

constexpr std::uint64_t kTrainDropoutTag = hash_name("train-dropout");
constexpr std::uint64_t kTrainNoiseTag = hash_name("train-noise");
constexpr std::uint64_t kShuffleTag = hash_name("shuffle");

int argmax_row(const Eigen::Ref<const RowMatrixXd>& m, Index row) {
  Index best = 0;
  m.row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

Index count_correct(const Tensor& logits, std::span<const int> labels) {
  const auto m = logits.matrix();
  Index correct = 0;
  for (Index i = 0; i < m.rows(); ++i) correct += argmax_row(m, i) == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  return correct;
}

Tensor noise_tensor(std::uint64_t seed, Index step, std::uint64_t sample, Index batch, Index classes) {
  const CounterStream stream(seed, static_cast<std::uint64_t>(step), kTrainNoiseTag + sample);
  Tensor eps({batch, classes});
  for (Index i = 0; i < eps.size(); ++i) eps[i] = stream.normal(static_cast<std::uint64_t>(i));
  return eps;
}

LossBreakdown combine(double ce, double kld, double weight) {
  return {.total = ce + weight * kld, .cross_entropy = ce, .kld = kld, .kld_weight = weight};
}

SummaryStat stat_of(const std::vector<double>& values) {
  SummaryStat s;
  if (values.empty()) return s;
  s.count = static_cast<Index>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

}  // namespace

TrainingDiverged::TrainingDiverged(Index step, const std::string& detail)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + detail), step(step) {}

EpochRecord evaluate_loss(const ModelParams& params, const ModelSpec& spec, const Dataset& data, double kld_weight) {
  Graph g(GraphOptions{.record_backward = false});
  const ParamVars vars = bind_params(g, params, false);
  const ForwardResult r = forward_layers(vars, spec, g.input("x", data.inputs, false), DropoutMode::eval_deterministic, {});
  EpochRecord rec;
  const double ce = cross_entropy(r.output, data.labels).value().item();
  double divergence = 0.0;
  double weight = 0.0;
  if (r.log_variance) {
    divergence = mean(kld(r.output, exp(*r.log_variance))).value().item();
    weight = kld_weight;
  }
  rec.loss = combine(ce, divergence, weight);
  rec.accuracy = static_cast<double>(count_correct(r.output.value(), data.labels)) / static_cast<double>(data.size());
  return rec;
}

TrainResult train(const ModelSpec& spec, ModelParams initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config) {
  validate(spec);
  train_set.validate();
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
  if (config.samples_per_step < 1) throw std::invalid_argument("train: samples per step must be at least 1");
  if (train_set.example_shape() != spec.input_shape) {
    throw ShapeError("train: dataset examples " + to_string(train_set.example_shape()) + " do not match model input " +
                     to_string(spec.input_shape));
  }
  if (train_set.classes() > spec.classes) throw ShapeError("train: dataset has more classes than the model");

  const bool variational = spec.variant == Variant::variational;
  const bool has_val = val_set.size() > 0;
  const double weight = variational ? config.kld_weight : 0.0;
  const std::uint64_t dropout_seed = splitmix64(config.seed ^ kTrainDropoutTag);

  TrainResult result;
  ModelParams params = std::move(initial);
  Optimizer optimizer(config.optimizer);
  std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), Index{0});

  double best_accuracy = -1.0;
  double best_loss = 0.0;
  Index step = 0;
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span(order));

    double ce_sum = 0.0, kld_sum = 0.0;
    Index correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Dataset batch = train_set.subset(std::span(order).subspan(start, end - start));
      const Index b = batch.size();

      Gradients grads;
      LossBreakdown loss;
      try {
        Graph g(GraphOptions{.check_finite = config.check_finite});
        const ParamVars vars = bind_params(g, params, true);
        const ForwardResult r = forward_layers(vars, spec, g.input("x", batch.inputs, false), DropoutMode::train,
                                               DropoutStream{dropout_seed, static_cast<std::uint64_t>(step)});
        LossVars lv;
        if (variational) {
          std::vector<Tensor> eps;
          for (Index k = 0; k < config.samples_per_step; ++k) {
            eps.push_back(noise_tensor(config.seed, step, static_cast<std::uint64_t>(k), b, spec.classes));
          }
          lv = variational_loss(r.output, *r.log_variance, eps, batch.labels, config.kld_weight);
        } else {
          lv = classification_loss(r.output, batch.labels);
        }
        loss = lv.values();
        if (!std::isfinite(loss.total)) throw TrainingDiverged(step, "non-finite loss");
        grads = g.backward(lv.total);
        correct += count_correct(r.output.value(), batch.labels);
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged(step, e.what());
      }
      optimizer.step(params, grads);
      ce_sum += loss.cross_entropy * static_cast<double>(b);
      kld_sum += loss.kld * static_cast<double>(b);
      ++step;
    }

    const auto n = static_cast<double>(train_set.size());
    EpochRecord train_rec{.epoch = epoch, .split = "train", .loss = combine(ce_sum / n, kld_sum / n, weight),
                          .accuracy = static_cast<double>(correct) / n};
    result.log.push_back(train_rec);
    result.final_loss = train_rec.loss.total;

    if (has_val) {
      EpochRecord val_rec = evaluate_loss(params, spec, val_set, config.kld_weight);
      val_rec.epoch = epoch;
      val_rec.split = "val";
      result.log.push_back(val_rec);
      if (val_rec.accuracy > best_accuracy || (val_rec.accuracy == best_accuracy && val_rec.loss.total < best_loss)) {
        best_accuracy = val_rec.accuracy;
        best_loss = val_rec.loss.total;
        result.params = params;
        result.best_epoch = epoch;
      }
    }
  }
  if (!has_val) {
    result.params = std::move(params);
    result.best_epoch = config.epochs;
  }
  result.steps = step;
  return result;
}

Evaluation evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& test, const EvalConfig& config) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  test.validate();
  if (is_mc_variant(spec.variant) && config.passes < 2) throw std::invalid_argument("evaluate: T must be at least 2");
  if (config.chunk < 1) throw std::invalid_argument("evaluate: chunk must be positive");

  std::vector<int> predicted;
  std::vector<ExampleRecord> records;
  ScoreMethod method = ScoreMethod::entropy;
  switch (spec.variant) {
    case Variant::baseline: break;
    case Variant::bayesian1:
    case Variant::bayesian2: method = ScoreMethod::mc_dropout; break;
    case Variant::variational: method = ScoreMethod::variational_analytic; break;
  }

  for (Index start = 0; start < test.size(); start += config.chunk) {
    const Index count = std::min(config.chunk, test.size() - start);
    std::vector<Index> rows(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor x = test.subset(rows).inputs;
    // Distinct chunks draw from distinct streams.
    const std::uint64_t chunk_seed = splitmix64(config.seed) ^ static_cast<std::uint64_t>(start);

    auto add = [&](Index local, int pred, double score, double entropy, std::optional<double> sampled,
                   Eigen::VectorXd variance) {
      const Index id = start + local;
      const int truth = test.labels[static_cast<std::size_t>(id)];
      predicted.push_back(pred);
      records.push_back({.id = id, .truth = truth, .predicted = pred, .correct = pred == truth, .score = score,
                         .entropy = entropy, .sampled_score = sampled, .class_variance = std::move(variance)});
    };

    if (is_mc_variant(spec.variant)) {
      const auto posts = mc_predict(params, spec, x,
                                    McOptions{.passes = config.passes, .seed = chunk_seed, .threads = config.threads});
      for (Index i = 0; i < count; ++i) {
        const auto& p = posts[static_cast<std::size_t>(i)];
        add(i, p.predicted(), uncertainty_score(p).value, predictive_entropy(p.mean), std::nullopt, p.variance);
      }
    } else if (spec.variant == Variant::variational) {
      const auto outs = variational_forward(params, spec, x, config.draws, chunk_seed);
      for (Index i = 0; i < count; ++i) {
        const auto& o = outs[static_cast<std::size_t>(i)];
        std::optional<double> sampled;
        Eigen::VectorXd probs;
        if (o.samples.rows() >= 2) {
          sampled = uncertainty_score(o, ScoreMethod::variational_sampled).value;
          probs = softmax_rows(o.samples).colwise().mean().transpose();
        } else {
          probs = softmax_rows(o.mu.transpose()).row(0).transpose();
        }
        add(i, o.predicted(), uncertainty_score(o).value, predictive_entropy(probs), sampled, o.sigma2);
      }
    } else {
      const Tensor logits = model_forward(params, spec, x, DropoutMode::eval_deterministic);
      const RowMatrixXd probs = softmax_rows(logits.matrix());
      for (Index i = 0; i < count; ++i) {
        const double h = predictive_entropy(probs.row(i).transpose());
        add(i, argmax_row(probs, i), h, h, std::nullopt, {});
      }
    }
  }

  Evaluation eval;
  eval.metrics = classification_metrics(test.labels, predicted, spec.classes);
  eval.report = build_report(std::move(records), method);
  return eval;
}

ComparisonRow comparison_row(Variant variant, std::uint64_t seed, const Evaluation& eval) {
  ComparisonRow row{.variant = variant,
                    .seed = seed,
                    .method = eval.report.method,
                    .accuracy = eval.metrics.accuracy,
                    .macro_precision = eval.metrics.macro_precision,
                    .macro_recall = eval.metrics.macro_recall,
                    .macro_f1 = eval.metrics.macro_f1};
  if (eval.report.correct) row.mean_correct = eval.report.correct->mean;
  if (eval.report.incorrect) row.mean_incorrect = eval.report.incorrect->mean;
  row.ratio = eval.report.ratio;
  return row;
}

std::vector<ComparisonSummary> summarize_rows(const std::vector<ComparisonRow>& rows) {
  std::vector<Variant> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  std::vector<ComparisonSummary> out;
  for (Variant v : order) {
    std::vector<double> acc, prec, rec, f1, mc, mi, ratio;
    for (const auto& r : rows) {
      if (r.variant != v) continue;
      acc.push_back(r.accuracy);
      prec.push_back(r.macro_precision);
      rec.push_back(r.macro_recall);
      f1.push_back(r.macro_f1);
      if (r.mean_correct) mc.push_back(*r.mean_correct);
      if (r.mean_incorrect) mi.push_back(*r.mean_incorrect);
      if (r.ratio) ratio.push_back(*r.ratio);
    }
    out.push_back({.variant = v, .accuracy = stat_of(acc), .macro_precision = stat_of(prec), .macro_recall = stat_of(rec),
                   .macro_f1 = stat_of(f1), .mean_correct = stat_of(mc), .mean_incorrect = stat_of(mi),
                   .ratio = stat_of(ratio)});
  }
  return out;
}

Comparison compare_variants(const Splits& data, const ComparisonConfig& config) {
  Comparison cmp;
  const Shape input = data.train.example_shape();
  const Index classes = data.train.classes();
  for (std::uint64_t seed : config.seeds) {
    for (Variant variant : config.variants) {
      VariantRun run{.variant = variant, .seed = seed};
      run.spec = make_model_spec(variant, config.backbone, input, classes, config.architecture);
      TrainConfig tc = config.training;
      tc.seed = seed;
      run.training = train(run.spec, build_model(run.spec, seed), data.train, data.val, tc);
      EvalConfig ec = config.evaluation;
      ec.seed = seed;
      run.evaluation = evaluate(run.training.params, run.spec, data.test, ec);
      cmp.rows.push_back(comparison_row(variant, seed, run.evaluation));
      cmp.runs.push_back(std::move(run));
    }
  }
  cmp.summary = summarize_rows(cmp.rows);
  return cmp;
}

}  // namespace mcdrop

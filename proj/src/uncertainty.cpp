#include "mcdrop/uncertainty.hpp"

#include "mcdrop/ops.hpp"
#include "mcdrop/parallel.hpp"

namespace mcdrop {
namespace {

// Stream tag for evaluation-time reparameterization noise.
constexpr std::uint64_t kEvalNoiseTag = 0x6e6f697365ULL;

int argmax(const Eigen::VectorXd& v) {
  Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

/// Unbiased, computed on data shifted by the first row so that identical rows
/// give exactly zero.
Eigen::VectorXd column_variance(const RowMatrixXd& rows) {
  const double denom = static_cast<double>(rows.rows() - 1);
  const RowMatrixXd shifted = rows.rowwise() - rows.row(0);
  const Eigen::RowVectorXd m = shifted.colwise().mean();
  return (shifted.rowwise() - m).array().square().colwise().sum().transpose() / denom;
}

}  // namespace

int PosteriorSamples::predicted() const { return argmax(mean); }
int VariationalOutput::predicted() const { return argmax(mu); }

RowMatrixXd softmax_rows(const Eigen::Ref<const RowMatrixXd>& logits) {
  RowMatrixXd s = logits.colwise() - logits.rowwise().maxCoeff();
  s = s.array().exp();
  s.array().colwise() /= s.rowwise().sum().array();
  return s;
}

PosteriorSamples summarize_samples(RowMatrixXd samples) {
  if (samples.rows() < 2) throw std::invalid_argument("posterior needs at least 2 samples for a variance");
  PosteriorSamples post;
  post.mean = samples.colwise().mean().transpose();
  post.variance = column_variance(samples);
  post.samples = std::move(samples);
  return post;
}

std::vector<PosteriorSamples> mc_predict(const ModelParams& params, const ModelSpec& spec, const Tensor& x,
                                         const McOptions& options) {
  if (!is_mc_variant(spec.variant)) {
    throw std::invalid_argument("mc_predict requires a bayesian1 or bayesian2 model, got " +
                                std::string(to_string(spec.variant)));
  }
  if (options.passes < 2) throw std::invalid_argument("mc_predict needs T >= 2 passes, got " + std::to_string(options.passes));

  std::size_t first_dropout = 0;
  while (spec.layers[first_dropout].kind != LayerKind::dropout) ++first_dropout;

  Tensor features;
  {
    Graph g(GraphOptions{.record_backward = false});
    const ParamVars vars = bind_params(g, params, false);
    features = forward_layers(vars, spec, g.input("x", as_batch(spec, x), false), DropoutMode::eval_deterministic, {}, 0,
                              first_dropout)
                   .output.value();
  }

  const auto passes = static_cast<std::size_t>(options.passes);
  std::vector<RowMatrixXd> probs(passes);
  parallel_for(passes, options.threads, [&](std::size_t t) {
    Graph g(GraphOptions{.record_backward = false});
    const ParamVars vars = bind_params(g, params, false);
    const DropoutStream stream{options.seed, t};
    const Var logits =
        forward_layers(vars, spec, g.input("features", features, false), DropoutMode::eval_sampling, stream, first_dropout)
            .output;
    probs[t] = softmax_rows(logits.value().matrix());
  });

  const Index batch = features.dim(0);
  std::vector<PosteriorSamples> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    RowMatrixXd rows(options.passes, spec.classes);
    for (std::size_t t = 0; t < passes; ++t) rows.row(static_cast<Index>(t)) = probs[t].row(b);
    out.push_back(summarize_samples(std::move(rows)));
  }
  return out;
}

NoiseDraw draw_noise(std::uint64_t seed, std::uint64_t draw, std::uint64_t example, Index classes) {
  const CounterStream stream(seed, draw, kEvalNoiseTag);
  NoiseDraw n{.epsilon = Eigen::VectorXd(classes), .seed = seed, .draw = draw, .example = example};
  const auto base = example * static_cast<std::uint64_t>(classes);
  for (Index c = 0; c < classes; ++c) n.epsilon[c] = stream.normal(base + static_cast<std::uint64_t>(c));
  return n;
}

std::vector<VariationalOutput> variational_forward(const ModelParams& params, const ModelSpec& spec, const Tensor& x,
                                                   Index draws, std::uint64_t seed) {
  if (spec.variant != Variant::variational) {
    throw std::invalid_argument("variational_forward requires a variational model, got " +
                                std::string(to_string(spec.variant)));
  }
  if (draws < 0) throw std::invalid_argument("variational_forward: negative draw count");
  Graph g(GraphOptions{.record_backward = false});
  const ParamVars vars = bind_params(g, params, false);
  const ForwardResult r =
      forward_layers(vars, spec, g.input("x", as_batch(spec, x), false), DropoutMode::eval_deterministic, {});
  const auto mu = r.output.value().matrix();
  const RowMatrixXd sigma2 = r.log_variance->value().matrix().array().exp();

  std::vector<VariationalOutput> out(static_cast<std::size_t>(mu.rows()));
  for (Index b = 0; b < mu.rows(); ++b) {
    auto& o = out[static_cast<std::size_t>(b)];
    o.mu = mu.row(b).transpose();
    o.sigma2 = sigma2.row(b).transpose();
    o.samples.resize(draws, spec.classes);
    for (Index s = 0; s < draws; ++s) {
      const NoiseDraw eps = draw_noise(seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b), spec.classes);
      o.samples.row(s) = reparameterize(o.mu, o.sigma2, eps.epsilon).transpose();
    }
  }
  return out;
}

Var kld(Var mu, Var sigma2) {
  if (mu.shape() != sigma2.shape()) throw ShapeError("kld: mu and sigma2 differ in shape");
  if (!(sigma2.value().data().array() > 0.0).all()) throw std::invalid_argument("kld: sigma2 must be strictly positive");
  Var terms = sub(sub(add(log(sigma2), 1.0), square(mu)), sigma2);
  return scale(sum_last(terms), -0.5);
}

std::string_view to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::mc_dropout: return "mc-dropout";
    case ScoreMethod::variational_analytic: return "variational-analytic";
    case ScoreMethod::variational_sampled: return "variational-sampled";
    case ScoreMethod::entropy: return "entropy";
  }
  return "?";
}

UncertaintyScore uncertainty_score(const PosteriorSamples& posterior) {
  if (!(posterior.variance.array() >= 0.0).all()) throw std::invalid_argument("posterior variance is negative");
  return {posterior.variance.mean(), ScoreMethod::mc_dropout};
}

UncertaintyScore uncertainty_score(const VariationalOutput& output, ScoreMethod method) {
  if (!(output.sigma2.array() > 0.0).all()) throw std::invalid_argument("variational sigma2 must be strictly positive");
  switch (method) {
    case ScoreMethod::variational_analytic:
      return {output.sigma2.mean(), method};
    case ScoreMethod::variational_sampled: {
      if (output.samples.rows() < 2) throw std::invalid_argument("sampled variational score needs S >= 2 draws");
      return {column_variance(softmax_rows(output.samples)).mean(), method};
    }
    default:
      throw std::invalid_argument("score method " + std::string(to_string(method)) + " does not apply to variational output");
  }
}

}  // namespace mcdrop

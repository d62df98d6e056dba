#include "mcdrop/model.hpp"

#include "mcdrop/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace mcdrop {
namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw SpecError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

Shape with_batch(Index batch, const Shape& shape) {
  Shape out{batch};
  out.insert(out.end(), shape.begin(), shape.end());
  return out;
}

Var linear(const ParamVars& p, const std::string& name, Var x) {
  return bias_add(matmul(x, p.at(name + ".weight")), p.at(name + ".bias"));
}

Var conv(const ParamVars& p, const std::string& name, Var x) {
  return conv2d(x, p.at(name + ".weight"), p.at(name + ".bias"));
}

Var residual_block(const ParamVars& p, const LayerSpec& layer, Var x) {
  const auto& n = layer.name;
  if (layer.conv) {
    Var h = conv(p, n + ".conv2", relu(conv(p, n + ".conv1", x)));
    Var shortcut = layer.in == layer.out ? x : conv(p, n + ".shortcut", x);
    return relu(h + shortcut);
  }
  Var h = linear(p, n + ".fc2", relu(linear(p, n + ".fc1", x)));
  Var shortcut = layer.in == layer.out ? x : linear(p, n + ".shortcut", x);
  return relu(h + shortcut);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw SpecError(message);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global-avg-pool";
    case LayerKind::dropout: return "dropout";
    case LayerKind::residual_block: return "residual-block";
    case LayerKind::variational_head: return "variational-head";
  }
  return "?";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::baseline: return "baseline";
    case Variant::bayesian1: return "bayesian1";
    case Variant::bayesian2: return "bayesian2";
    case Variant::variational: return "variational";
  }
  return "?";
}

std::string_view to_string(Backbone backbone) { return backbone == Backbone::mlp ? "mlp" : "resnet"; }

std::string_view to_string(DropoutMode mode) {
  switch (mode) {
    case DropoutMode::train: return "train";
    case DropoutMode::eval_deterministic: return "eval-deterministic";
    case DropoutMode::eval_sampling: return "eval-sampling";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view s) {
  return parse_enum(s,
                    std::array{LayerKind::linear, LayerKind::conv3x3, LayerKind::relu, LayerKind::global_avg_pool,
                               LayerKind::dropout, LayerKind::residual_block, LayerKind::variational_head},
                    "layer kind");
}

Variant parse_variant(std::string_view s) {
  return parse_enum(s, std::array{Variant::baseline, Variant::bayesian1, Variant::bayesian2, Variant::variational},
                    "variant");
}

Backbone parse_backbone(std::string_view s) { return parse_enum(s, std::array{Backbone::mlp, Backbone::resnet}, "backbone"); }

ModelSpec make_model_spec(Variant variant, Backbone backbone, Shape input_shape, Index classes,
                          ArchitectureOptions options) {
  ModelSpec spec;
  spec.variant = variant;
  spec.backbone = backbone;
  spec.classes = classes;
  spec.input_shape = std::move(input_shape);

  const bool before_blocks = variant == Variant::bayesian2;
  const bool before_head = variant == Variant::bayesian1 || variant == Variant::bayesian2;
  auto& layers = spec.layers;
  auto add_block = [&](Index in, Index out, bool conv, int index) {
    if (before_blocks) layers.push_back({.kind = LayerKind::dropout, .rate = options.dropout_rate});
    layers.push_back({.kind = LayerKind::residual_block, .in = in, .out = out, .conv = conv,
                      .name = "block" + std::to_string(index)});
  };

  Index features = 0;
  if (backbone == Backbone::mlp) {
    require(spec.input_shape.size() == 1, "mlp backbone expects vector inputs, got " + to_string(spec.input_shape));
    const Index w = options.width;
    layers.push_back({.kind = LayerKind::linear, .in = spec.input_shape[0], .out = w, .name = "input"});
    layers.push_back({.kind = LayerKind::relu});
    add_block(w, w, false, 1);
    add_block(w, w, false, 2);
    features = w;
  } else {
    require(spec.input_shape.size() == 3, "resnet backbone expects [channels, height, width] inputs, got " +
                                              to_string(spec.input_shape));
    layers.push_back({.kind = LayerKind::conv3x3, .in = spec.input_shape[0], .out = 8, .name = "stem"});
    layers.push_back({.kind = LayerKind::relu});
    add_block(8, 8, true, 1);
    add_block(8, 16, true, 2);
    add_block(16, 16, true, 3);
    layers.push_back({.kind = LayerKind::global_avg_pool});
    features = 16;
  }
  if (before_head) layers.push_back({.kind = LayerKind::dropout, .rate = options.dropout_rate});
  if (variant == Variant::variational) {
    layers.push_back({.kind = LayerKind::variational_head, .in = features, .out = classes, .name = "head"});
  } else {
    layers.push_back({.kind = LayerKind::linear, .in = features, .out = classes, .name = "head"});
  }
  validate(spec);
  return spec;
}

Shape output_shape(const LayerSpec& layer, const Shape& input, Index classes) {
  const std::string where = std::string(to_string(layer.kind)) + " layer";
  switch (layer.kind) {
    case LayerKind::linear:
      require(input.size() == 1 && input[0] == layer.in, where + " expects [" + std::to_string(layer.in) + "], got " +
                                                             to_string(input));
      return {layer.out};
    case LayerKind::variational_head:
      require(input.size() == 1 && input[0] == layer.in, where + " expects [" + std::to_string(layer.in) + "], got " +
                                                             to_string(input));
      require(layer.out == classes, where + " must output the class count");
      return {classes};
    case LayerKind::conv3x3:
      require(input.size() == 3 && input[0] == layer.in, where + " expects " + std::to_string(layer.in) +
                                                             " channels, got " + to_string(input));
      return {layer.out, input[1], input[2]};
    case LayerKind::relu:
      return input;
    case LayerKind::dropout:
      require(layer.rate >= 0.0 && layer.rate < 1.0, "dropout rate must lie in [0, 1)");
      return input;
    case LayerKind::global_avg_pool:
      require(input.size() == 3, where + " expects [C, H, W], got " + to_string(input));
      return {input[0]};
    case LayerKind::residual_block:
      if (layer.conv) {
        require(input.size() == 3 && input[0] == layer.in, where + " expects " + std::to_string(layer.in) +
                                                               " channels, got " + to_string(input));
        return {layer.out, input[1], input[2]};
      }
      require(input.size() == 1 && input[0] == layer.in, where + " expects [" + std::to_string(layer.in) + "], got " +
                                                             to_string(input));
      return {layer.out};
  }
  return input;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const LayerSpec& layer, Index classes) {
  const auto& n = layer.name;
  const Index in = layer.in, out = layer.out;
  switch (layer.kind) {
    case LayerKind::linear:
      return {{n + ".weight", {in, out}}, {n + ".bias", {out}}};
    case LayerKind::conv3x3:
      return {{n + ".weight", {out, in, 3, 3}}, {n + ".bias", {out}}};
    case LayerKind::variational_head:
      return {{n + ".mu.weight", {in, classes}},
              {n + ".mu.bias", {classes}},
              {n + ".logvar.weight", {in, classes}},
              {n + ".logvar.bias", {classes}}};
    case LayerKind::residual_block: {
      std::vector<std::pair<std::string, Shape>> shapes;
      if (layer.conv) {
        shapes = {{n + ".conv1.weight", {out, in, 3, 3}},
                  {n + ".conv1.bias", {out}},
                  {n + ".conv2.weight", {out, out, 3, 3}},
                  {n + ".conv2.bias", {out}}};
        if (in != out) {
          shapes.push_back({n + ".shortcut.weight", {out, in, 1, 1}});
          shapes.push_back({n + ".shortcut.bias", {out}});
        }
      } else {
        shapes = {{n + ".fc1.weight", {in, out}}, {n + ".fc1.bias", {out}}, {n + ".fc2.weight", {out, out}},
                  {n + ".fc2.bias", {out}}};
        if (in != out) {
          shapes.push_back({n + ".shortcut.weight", {in, out}});
          shapes.push_back({n + ".shortcut.bias", {out}});
        }
      }
      return shapes;
    }
    default:
      return {};
  }
}

void validate(const ModelSpec& spec) {
  require(spec.classes >= 2, "class count must be at least 2");
  require(!spec.layers.empty(), "model has no layers");
  require(!spec.input_shape.empty(), "input shape is empty");
  for (Index d : spec.input_shape) require(d > 0, "input shape " + to_string(spec.input_shape) + " has empty extent");

  Shape shape = spec.input_shape;
  for (const auto& layer : spec.layers) {
    const bool parametric = !parameter_shapes(layer, spec.classes).empty();
    require(!parametric || !layer.name.empty(), std::string(to_string(layer.kind)) + " layer needs a parameter name");
    shape = output_shape(layer, shape, spec.classes);
  }
  require(shape == Shape{spec.classes}, "model output " + to_string(shape) + " does not match class count");

  const std::size_t head = spec.layers.size() - 1;
  const auto& last = spec.layers[head];
  if (spec.variant == Variant::variational) {
    require(last.kind == LayerKind::variational_head, "variational model must end in a variational head");
  } else {
    require(last.kind == LayerKind::linear, std::string(to_string(spec.variant)) + " model must end in a linear head");
  }
  for (std::size_t i = 0; i < head; ++i) {
    require(spec.layers[i].kind != LayerKind::variational_head, "variational head must be the last layer");
  }

  const Index dropouts = dropout_layer_count(spec);
  const bool dropout_before_head = head > 0 && spec.layers[head - 1].kind == LayerKind::dropout;
  switch (spec.variant) {
    case Variant::baseline:
    case Variant::variational:
      require(dropouts == 0, std::string(to_string(spec.variant)) + " model must not contain dropout");
      break;
    case Variant::bayesian1:
      require(dropouts == 1 && dropout_before_head, "bayesian1 needs exactly one dropout, immediately before the head");
      break;
    case Variant::bayesian2: {
      Index blocks = 0;
      for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::residual_block) continue;
        ++blocks;
        require(i > 0 && spec.layers[i - 1].kind == LayerKind::dropout,
                "bayesian2 needs dropout before every residual block (missing before " + spec.layers[i].name + ")");
      }
      require(dropout_before_head && dropouts == blocks + 1,
              "bayesian2 needs one dropout per residual block plus one before the head");
      break;
    }
  }
}

Index dropout_layer_count(const ModelSpec& spec) {
  Index n = 0;
  for (const auto& l : spec.layers) n += l.kind == LayerKind::dropout ? 1 : 0;
  return n;
}

Index ModelParams::parameter_count() const {
  Index n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.seed != b.seed || a.tensors.size() != b.tensors.size()) return false;
  for (const auto& [name, t] : a.tensors) {
    const auto it = b.tensors.find(name);
    if (it == b.tensors.end() || !identical(t, it->second)) return false;
  }
  return true;
}

ModelParams build_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  ModelParams params;
  params.seed = seed;
  for (const auto& layer : spec.layers) {
    for (auto& [name, shape] : parameter_shapes(layer, spec.classes)) {
      Tensor t(shape);
      if (shape.size() > 1) {
        // linear weights are [in, out]; conv weights are [out, in, k, k]
        const Index fan_in = shape.size() == 2 ? shape[0] : shape[1] * shape[2] * shape[3];
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        Rng rng(seed, hash_name(name));
        for (Index i = 0; i < t.size(); ++i) t[i] = sd * rng.normal();
      }
      params.tensors.emplace(name, std::move(t));
    }
  }
  return params;
}

Tensor dropout_mask(const Shape& shape, double p, const CounterStream& stream) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate " + std::to_string(p) + " outside [0, 1)");
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) {
    mask[i] = stream.uniform(static_cast<std::uint64_t>(i)) < p ? 0.0 : keep_scale;
  }
  return mask;
}

Tensor dropout(const Tensor& x, double p, DropoutMode mode, const CounterStream& stream) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate " + std::to_string(p) + " outside [0, 1)");
  if (mode == DropoutMode::eval_deterministic || p == 0.0) return x;
  Tensor out = dropout_mask(x.shape(), p, stream);
  out.data().array() *= x.data().array();
  return out;
}

Var dropout(Var x, double p, DropoutMode mode, const CounterStream& stream) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate " + std::to_string(p) + " outside [0, 1)");
  if (mode == DropoutMode::eval_deterministic || p == 0.0) return x;
  return mul(x, x.graph->constant(dropout_mask(x.shape(), p, stream)));
}

ParamVars bind_params(Graph& graph, const ModelParams& params, bool requires_grad) {
  ParamVars vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, graph.input(name, t, requires_grad));
  return vars;
}

ForwardResult forward_layers(const ParamVars& params, const ModelSpec& spec, Var x, DropoutMode mode,
                             const DropoutStream& stream, std::size_t begin, std::size_t end) {
  ForwardResult result{.output = x};
  end = std::min(end, spec.layers.size());
  for (std::size_t i = begin; i < end; ++i) {
    const LayerSpec& layer = spec.layers[i];
    Var& h = result.output;
    switch (layer.kind) {
      case LayerKind::linear: h = linear(params, layer.name, h); break;
      case LayerKind::conv3x3: h = conv(params, layer.name, h); break;
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::global_avg_pool: h = global_avg_pool(h); break;
      case LayerKind::residual_block: h = residual_block(params, layer, h); break;
      case LayerKind::dropout:
        if (mode != DropoutMode::eval_deterministic) ++result.dropout_applications;
        h = dropout(h, layer.rate, mode, stream.layer(i));
        break;
      case LayerKind::variational_head: {
        Var features = h;
        h = linear(params, layer.name + ".mu", features);
        result.log_variance = clamp(linear(params, layer.name + ".logvar", features), kLogVarianceMin, kLogVarianceMax);
        break;
      }
    }
  }
  return result;
}

Tensor as_batch(const ModelSpec& spec, const Tensor& x) {
  if (x.shape() == spec.input_shape) return x.reshaped(with_batch(1, spec.input_shape));
  const Shape& s = x.shape();
  if (s.size() == spec.input_shape.size() + 1 && std::equal(spec.input_shape.begin(), spec.input_shape.end(), s.begin() + 1)) {
    return x;
  }
  throw ShapeError("input " + to_string(s) + " does not match model input " + to_string(spec.input_shape));
}

Tensor model_forward(const ModelParams& params, const ModelSpec& spec, const Tensor& x, DropoutMode mode,
                     const DropoutStream& stream) {
  Graph g(GraphOptions{.record_backward = false});
  const ParamVars vars = bind_params(g, params, false);
  return forward_layers(vars, spec, g.input("x", as_batch(spec, x), false), mode, stream).output.value();
}

}  // namespace mcdrop

#pragma once

#include "mcdrop/autodiff.hpp"
#include "mcdrop/random.hpp"
#include "mcdrop/tensor.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcdrop {

enum class LayerKind { linear, conv3x3, relu, global_avg_pool, dropout, residual_block, variational_head };
enum class Variant { baseline, bayesian1, bayesian2, variational };
enum class Backbone { mlp, resnet };
enum class DropoutMode { train, eval_deterministic, eval_sampling };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Variant variant);
std::string_view to_string(Backbone backbone);
std::string_view to_string(DropoutMode mode);
LayerKind parse_layer_kind(std::string_view s);
Variant parse_variant(std::string_view s);
Backbone parse_backbone(std::string_view s);

inline bool is_mc_variant(Variant v) { return v == Variant::bayesian1 || v == Variant::bayesian2; }

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  Index in = 0;  // features for dense layers, channels for conv layers
  Index out = 0;
  double rate = 0.0;  // dropout only
  bool conv = false;  // residual_block: conv-relu-conv instead of fc-relu-fc
  std::string name;   // parameter prefix, empty for parameter-free layers

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  Variant variant = Variant::baseline;
  Backbone backbone = Backbone::mlp;
  Index classes = 4;
  Shape input_shape;  // per example: {features} or {channels, height, width}
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ArchitectureOptions {
  Index width = 64;  // MLP hidden width
  double dropout_rate = 0.5;
};

/// Preset layer stacks.
///
/// mlp:    linear(D->W) relu, 2 dense residual blocks, fc head
/// resnet: conv3x3 stem (8) relu, residual blocks 8/16/16, global average pool, fc head
///
/// bayesian1 inserts dropout before the head; bayesian2 additionally before
/// every residual block. variational swaps the head for a (mu, log sigma^2) pair.
ModelSpec make_model_spec(Variant variant, Backbone backbone, Shape input_shape, Index classes = 4,
                          ArchitectureOptions options = {});

/// Throws SpecError on inconsistent shapes or a dropout placement that does
/// not match the variant.
void validate(const ModelSpec& spec);
Index dropout_layer_count(const ModelSpec& spec);
/// Per-example output shape of `layer` applied to `input`.
Shape output_shape(const LayerSpec& layer, const Shape& input, Index classes);

/// Parameter tensor names and shapes of one layer.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const LayerSpec& layer, Index classes);

struct ModelParams {
  std::map<std::string, Tensor> tensors;
  std::uint64_t seed = 0;

  Index parameter_count() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// He init: weights ~ N(0, 2 / fan_in), biases zero. Each tensor draws from a
/// stream keyed by its name, so variants sharing a body share its weights.
ModelParams build_model(const ModelSpec& spec, std::uint64_t seed);

/// Identifies a forward pass for mask generation.
struct DropoutStream {
  std::uint64_t seed = 0;
  std::uint64_t pass = 0;

  CounterStream layer(std::size_t layer_index) const { return CounterStream(seed, pass, layer_index); }
};

/// Inverted dropout mask: 0 with probability p, else 1 / (1 - p). Element i
/// draws counter i of `stream`.
Tensor dropout_mask(const Shape& shape, double p, const CounterStream& stream);
Tensor dropout(const Tensor& x, double p, DropoutMode mode, const CounterStream& stream);
Var dropout(Var x, double p, DropoutMode mode, const CounterStream& stream);

using ParamVars = std::map<std::string, Var>;
ParamVars bind_params(Graph& graph, const ModelParams& params, bool requires_grad);

constexpr double kLogVarianceMin = -10.0;
constexpr double kLogVarianceMax = 10.0;

struct ForwardResult {
  Var output;                        // logits, or mu for the variational head
  std::optional<Var> log_variance;   // clamped, variational head only
  Index dropout_applications = 0;
};

/// Runs layers [begin, end) on a batched activation.
ForwardResult forward_layers(const ParamVars& params, const ModelSpec& spec, Var x, DropoutMode mode,
                             const DropoutStream& stream, std::size_t begin = 0,
                             std::size_t end = std::numeric_limits<std::size_t>::max());

/// Accepts a batch [B, input_shape...] or a single example shaped input_shape.
Tensor as_batch(const ModelSpec& spec, const Tensor& x);

/// Logits [B, classes]; mu for variational models.
Tensor model_forward(const ModelParams& params, const ModelSpec& spec, const Tensor& x, DropoutMode mode,
                     const DropoutStream& stream = {});

}  // namespace mcdrop

#include "mcdrop/model.hpp"
#include "mcdrop/ops.hpp"
#include "support/gradient_cases.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mcdrop;

namespace {

const std::vector<Variant> kVariants{Variant::baseline, Variant::bayesian1, Variant::bayesian2, Variant::variational};

std::vector<std::size_t> dropout_positions(const ModelSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::dropout) out.push_back(i);
  }
  return out;
}

ModelSpec resnet(Variant v) { return make_model_spec(v, Backbone::resnet, {1, 16, 16}, 4); }
ModelSpec mlp(Variant v) { return make_model_spec(v, Backbone::mlp, {5}, 4, {.width = 16}); }

}  // namespace

TEST_SUITE("model spec") {
  TEST_CASE("dropout placement per variant") {
    for (auto make : {resnet, mlp}) {
      const ModelSpec base = make(Variant::baseline);
      CHECK(dropout_layer_count(base) == 0);

      const ModelSpec b1 = make(Variant::bayesian1);
      const auto p1 = dropout_positions(b1);
      REQUIRE(p1.size() == 1);
      CHECK(p1[0] + 2 == b1.layers.size());
      CHECK(b1.layers.back().kind == LayerKind::linear);
      CHECK(b1.layers[p1[0]].rate == 0.5);

      const ModelSpec b2 = make(Variant::bayesian2);
      const auto blocks = std::count_if(b2.layers.begin(), b2.layers.end(),
                                        [](const LayerSpec& l) { return l.kind == LayerKind::residual_block; });
      CHECK(dropout_layer_count(b2) == blocks + 1);
      for (std::size_t i = 0; i < b2.layers.size(); ++i) {
        if (b2.layers[i].kind == LayerKind::residual_block) {
          REQUIRE(i > 0);
          CHECK(b2.layers[i - 1].kind == LayerKind::dropout);
        }
      }
      CHECK(b2.layers[b2.layers.size() - 2].kind == LayerKind::dropout);

      const ModelSpec var = make(Variant::variational);
      CHECK(dropout_layer_count(var) == 0);
      CHECK(var.layers.back().kind == LayerKind::variational_head);
    }
  }

  TEST_CASE("resnet layout") {
    const ModelSpec s = resnet(Variant::baseline);
    CHECK(s.layers.front().kind == LayerKind::conv3x3);
    CHECK(s.layers.front().out == 8);
    std::vector<std::pair<Index, Index>> blocks;
    for (const auto& l : s.layers) {
      if (l.kind == LayerKind::residual_block) blocks.emplace_back(l.in, l.out);
    }
    CHECK(blocks == std::vector<std::pair<Index, Index>>{{8, 8}, {8, 16}, {16, 16}});
    CHECK(std::any_of(s.layers.begin(), s.layers.end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::global_avg_pool; }));
  }

  TEST_CASE("validation rejects bad specs") {
    ModelSpec s = mlp(Variant::bayesian1);
    s.layers[dropout_positions(s)[0]].rate = 1.0;
    CHECK_THROWS_AS(validate(s), SpecError);

    ModelSpec wrong_place = mlp(Variant::bayesian1);
    const auto d = dropout_positions(wrong_place)[0];
    std::swap(wrong_place.layers[d - 1], wrong_place.layers[d]);
    CHECK_THROWS_AS(validate(wrong_place), SpecError);

    ModelSpec baseline_with_dropout = mlp(Variant::bayesian1);
    baseline_with_dropout.variant = Variant::baseline;
    CHECK_THROWS_AS(validate(baseline_with_dropout), SpecError);

    ModelSpec bad_width = mlp(Variant::baseline);
    bad_width.layers.back().in = 3;
    CHECK_THROWS_AS(validate(bad_width), SpecError);

    CHECK_THROWS_AS(make_model_spec(Variant::baseline, Backbone::resnet, {5}, 4), SpecError);
  }

  TEST_CASE("residual blocks preserve shape when in == out") {
    const ModelSpec s = resnet(Variant::baseline);
    Shape shape = s.input_shape;
    for (const auto& l : s.layers) {
      const Shape next = output_shape(l, shape, s.classes);
      if (l.kind == LayerKind::residual_block && l.in == l.out) CHECK(next == shape);
      shape = next;
    }
    CHECK(shape == Shape{4});
  }

  TEST_CASE("enum names round trip") {
    for (Variant v : kVariants) CHECK(parse_variant(to_string(v)) == v);
    CHECK(parse_backbone("resnet") == Backbone::resnet);
    CHECK_THROWS_AS(parse_variant("bayesian3"), SpecError);
  }
}

TEST_SUITE("build_model") {
  TEST_CASE("deterministic given spec and seed") {
    const ModelSpec s = resnet(Variant::bayesian2);
    CHECK(build_model(s, 4) == build_model(s, 4));
    CHECK_FALSE(build_model(s, 4) == build_model(s, 5));
  }

  TEST_CASE("every parameterized layer maps to named tensors of the right shape") {
    for (Variant v : kVariants) {
      const ModelSpec s = resnet(v);
      const ModelParams p = build_model(s, 0);
      std::size_t expected = 0;
      for (const auto& l : s.layers) {
        for (const auto& [name, shape] : parameter_shapes(l, s.classes)) {
          ++expected;
          REQUIRE(p.tensors.count(name) == 1);
          CHECK(p.tensors.at(name).shape() == shape);
        }
      }
      CHECK(p.tensors.size() == expected);
    }
  }

  TEST_CASE("dropout adds no parameters and variants share weights") {
    for (auto make : {resnet, mlp}) {
      const ModelParams base = build_model(make(Variant::baseline), 9);
      for (Variant v : {Variant::bayesian1, Variant::bayesian2}) {
        const ModelParams other = build_model(make(v), 9);
        CHECK(other == base);
        CHECK(other.parameter_count() == base.parameter_count());
      }
    }
  }

  TEST_CASE("He init variance for fan-in 100") {
    const ModelSpec s = make_model_spec(Variant::baseline, Backbone::mlp, {100}, 4, {.width = 50});
    double sum_sq = 0.0;
    Index count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const ModelParams params = build_model(s, seed);
      const Tensor& w = params.tensors.at("input.weight");
      REQUIRE(w.shape() == Shape{100, 50});
      sum_sq += w.data().squaredNorm();
      count += w.size();
      CHECK(params.tensors.at("input.bias").data().isZero());
    }
    const double variance = sum_sq / static_cast<double>(count);
    CHECK(std::abs(variance - 0.02) < 0.2 * 0.02);
  }
}

TEST_SUITE("dropout") {
  TEST_CASE("p = 0 is the identity in every mode") {
    Rng rng(1);
    const Tensor x = testing::random_tensor(rng, {4, 6});
    for (DropoutMode m : {DropoutMode::train, DropoutMode::eval_sampling, DropoutMode::eval_deterministic}) {
      CHECK(identical(dropout(x, 0.0, m, CounterStream(3)), x));
    }
  }

  TEST_CASE("eval-deterministic is the identity") {
    Rng rng(2);
    const Tensor x = testing::random_tensor(rng, {3, 3});
    CHECK(identical(dropout(x, 0.5, DropoutMode::eval_deterministic, CounterStream(3)), x));
  }

  TEST_CASE("survivors are scaled by 1 / (1 - p)") {
    const Tensor x = Tensor::constant({1000}, 1.5);
    const Tensor y = dropout(x, 0.5, DropoutMode::train, CounterStream(8));
    Index kept = 0;
    for (Index i = 0; i < y.size(); ++i) {
      CHECK((y[i] == 0.0 || y[i] == 3.0));
      kept += y[i] != 0.0 ? 1 : 0;
    }
    CHECK(std::abs(static_cast<double>(kept) / 1000.0 - 0.5) < 0.06);
  }

  TEST_CASE("an all-keep mask doubles the input at p = 0.5") {
    // Find a stream whose first four mask entries all keep, then apply it.
    const Tensor x({4}, {1, -2, 3, 0.5});
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const CounterStream stream(s);
      const Tensor mask = dropout_mask({4}, 0.5, stream);
      if ((mask.data().array() == 0.0).any()) continue;
      const Tensor y = dropout(x, 0.5, DropoutMode::train, stream);
      for (Index i = 0; i < 4; ++i) CHECK(y[i] == 2.0 * x[i]);
      return;
    }
    FAIL("no all-keep mask found");
  }

  TEST_CASE("eval-sampling uses the same masks as train") {
    Rng rng(4);
    const Tensor x = testing::random_tensor(rng, {5, 5});
    CHECK(identical(dropout(x, 0.3, DropoutMode::train, CounterStream(6, 1, 2)),
                    dropout(x, 0.3, DropoutMode::eval_sampling, CounterStream(6, 1, 2))));
  }

  TEST_CASE("invalid rates are rejected") {
    const Tensor x({2}, {1, 2});
    CHECK_THROWS_AS(dropout(x, 1.0, DropoutMode::train, CounterStream(0)), std::invalid_argument);
    CHECK_THROWS_AS(dropout(x, -0.1, DropoutMode::train, CounterStream(0)), std::invalid_argument);
  }

  TEST_CASE("expectation of a linear model converges like 1/sqrt(n)") {
    // y = w . dropout(x); E[y] = w . x
    Rng rng(12);
    const Tensor x = testing::random_tensor(rng, {1, 32});
    const Tensor w = testing::random_tensor(rng, {32});
    const double exact = x.data().dot(w.data());
    auto mean_of = [&](int n, std::uint64_t seed) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += dropout(x, 0.5, DropoutMode::eval_sampling, CounterStream(seed, static_cast<std::uint64_t>(k))).data().dot(w.data());
      }
      return s / n;
    };
    const double m10000 = mean_of(10000, 1);
    CHECK(std::abs(m10000 - exact) / std::abs(exact) < 0.05);
    // RMS error over repeats at n = 100 vs n = 10000 should shrink about tenfold
    double e100 = 0.0, e10000 = 0.0;
    for (std::uint64_t r = 0; r < 20; ++r) {
      e100 += std::pow(mean_of(100, 100 + r) - exact, 2);
      e10000 += std::pow(mean_of(10000, 200 + r) - exact, 2);
    }
    const double ratio = std::sqrt(e100 / e10000);
    CHECK(ratio > 5.0);
    CHECK(ratio < 20.0);
  }
}

TEST_SUITE("model_forward") {
  TEST_CASE("zero input gives finite [1, 4] logits") {
    const ModelSpec s = resnet(Variant::baseline);
    const Tensor logits = model_forward(build_model(s, 0), s, Tensor(s.input_shape), DropoutMode::eval_deterministic);
    CHECK(logits.shape() == Shape{1, 4});
    CHECK(logits.all_finite());
  }

  TEST_CASE("frozen stream makes eval-sampling repeatable") {
    const ModelSpec s = mlp(Variant::bayesian2);
    const ModelParams p = build_model(s, 1);
    Rng rng(3);
    const Tensor x = testing::random_tensor(rng, {6, 5});
    const DropoutStream stream{77, 3};
    CHECK(identical(model_forward(p, s, x, DropoutMode::eval_sampling, stream),
                    model_forward(p, s, x, DropoutMode::eval_sampling, stream)));
    CHECK_FALSE(identical(model_forward(p, s, x, DropoutMode::eval_sampling, stream),
                          model_forward(p, s, x, DropoutMode::eval_sampling, DropoutStream{77, 4})));
    CHECK(identical(model_forward(p, s, x, DropoutMode::eval_deterministic),
                    model_forward(p, s, x, DropoutMode::eval_deterministic)));
  }

  TEST_CASE("bayesian2 counts B + 1 dropout applications") {
    const ModelSpec s = resnet(Variant::bayesian2);
    const ModelParams p = build_model(s, 0);
    Graph g(GraphOptions{.record_backward = false});
    const auto vars = bind_params(g, p, false);
    Rng rng(1);
    const auto r = forward_layers(vars, s, g.input("x", testing::random_tensor(rng, {2, 1, 16, 16}), false),
                                  DropoutMode::eval_sampling, DropoutStream{1, 0});
    CHECK(r.dropout_applications == 4);
    const auto det = forward_layers(vars, s, g.input("y", testing::random_tensor(rng, {2, 1, 16, 16}), false),
                                    DropoutMode::eval_deterministic, {});
    CHECK(det.dropout_applications == 0);
  }

  TEST_CASE("input shape mismatch is an error") {
    const ModelSpec s = resnet(Variant::baseline);
    CHECK_THROWS_AS(model_forward(build_model(s, 0), s, Tensor({1, 2, 16, 16}), DropoutMode::eval_deterministic),
                    ShapeError);
  }

  TEST_CASE("variational head returns clamped log variance") {
    const ModelSpec s = mlp(Variant::variational);
    ModelParams p = build_model(s, 0);
    p.tensors.at("head.logvar.bias").data().setConstant(50.0);
    Graph g(GraphOptions{.record_backward = false});
    const auto r = forward_layers(bind_params(g, p, false), s, g.input("x", Tensor({3, 5}), false),
                                  DropoutMode::eval_deterministic, {});
    REQUIRE(r.log_variance);
    CHECK(r.log_variance->value().data().maxCoeff() == kLogVarianceMax);
    CHECK(r.output.shape() == Shape{3, 4});
  }

  TEST_CASE("gradients of the whole network match finite differences") {
    for (Variant v : {Variant::bayesian2, Variant::variational}) {
      const ModelSpec s = make_model_spec(v, Backbone::resnet, {1, 8, 8}, 3);
      const ModelParams p = build_model(s, 2);
      Rng rng(6);
      const Tensor x = testing::random_tensor(rng, {2, 1, 8, 8});
      // differentiate with respect to the input image only
      const ScalarFunction fn = [&](Graph& g, Var in) {
        const auto r = forward_layers(bind_params(g, p, false), s, in, DropoutMode::train, DropoutStream{3, 0});
        return sum(square(r.output));
      };
      CHECK(check_gradient(fn, x, 1e-6) < 1e-4);
    }
  }
}

#pragma once

// Finite-difference cases for every differentiable op and both losses.
// Shared by the unit tests and the acceptance runner.

#include "mcdrop/gradcheck.hpp"
#include "mcdrop/losses.hpp"
#include "mcdrop/model.hpp"
#include "mcdrop/ops.hpp"
#include "mcdrop/random.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mcdrop::testing {

struct GradientCase {
  std::string name;
  std::function<std::map<std::string, Tensor>(Rng&)> sample;
  std::function<ScalarProgram(Rng&)> program;  // may capture random constants
};

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

/// Values with |x| >= margin, so kinks at 0 are never straddled by the step.
inline Tensor away_from_zero(Rng& rng, Shape shape, double margin = 0.05) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = std::copysign(std::abs(t[i]) + margin, t[i]);
  return t;
}

inline Tensor positive_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = 0.2 + 2.0 * rng.uniform();
  return t;
}

inline std::vector<int> random_labels(Rng& rng, Index n, Index classes) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return labels;
}

/// Contracts a tensor-valued result with fixed random weights so every output
/// element reaches the scalar.
inline Var project(Graph& g, Var v, const Tensor& weights) { return sum(mul(v, g.constant(weights))); }

inline std::map<std::string, Tensor> one(const std::string& name, Tensor t) { return {{name, std::move(t)}}; }

inline std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> cases;
  auto unary = [&cases](std::string name, std::function<Tensor(Rng&)> make, std::function<Var(Var)> op,
                        Shape out_shape) {
    cases.push_back({name, [make](Rng& r) { return one("x", make(r)); },
                     [op, out_shape](Rng& r) -> ScalarProgram {
                       const Tensor w = random_tensor(r, out_shape);
                       return [op, w](Graph& g, const std::map<std::string, Var>& in) { return project(g, op(in.at("x")), w); };
                     }});
  };
  auto binary = [&cases](std::string name, Shape sa, Shape sb, std::function<Var(Var, Var)> op, Shape out_shape) {
    cases.push_back({name,
                     [sa, sb](Rng& r) {
                       return std::map<std::string, Tensor>{{"a", random_tensor(r, sa)}, {"b", random_tensor(r, sb)}};
                     },
                     [op, out_shape](Rng& r) -> ScalarProgram {
                       const Tensor w = random_tensor(r, out_shape);
                       return [op, w](Graph& g, const std::map<std::string, Var>& in) {
                         return project(g, op(in.at("a"), in.at("b")), w);
                       };
                     }});
  };

  binary("add", {3, 4}, {3, 4}, [](Var a, Var b) { return add(a, b); }, {3, 4});
  binary("sub", {3, 4}, {3, 4}, [](Var a, Var b) { return sub(a, b); }, {3, 4});
  binary("mul", {3, 4}, {3, 4}, [](Var a, Var b) { return mul(a, b); }, {3, 4});
  binary("mul-scalar-broadcast", {3, 4}, {}, [](Var a, Var b) { return mul(a, b); }, {3, 4});
  binary("add-scalar-broadcast", {2, 5}, {}, [](Var a, Var b) { return add(a, b); }, {2, 5});
  binary("matmul", {3, 5}, {5, 2}, [](Var a, Var b) { return matmul(a, b); }, {3, 2});
  binary("bias-add", {4, 3}, {3}, [](Var a, Var b) { return bias_add(a, b); }, {4, 3});
  unary("add-constant", [](Rng& r) { return random_tensor(r, {6}); }, [](Var x) { return add(x, 0.75); }, {6});
  unary("scale", [](Rng& r) { return random_tensor(r, {6}); }, [](Var x) { return scale(x, -1.5); }, {6});
  unary("relu", [](Rng& r) { return away_from_zero(r, {3, 4}); }, [](Var x) { return relu(x); }, {3, 4});
  unary("exp", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return exp(x); }, {3, 4});
  unary("log", [](Rng& r) { return positive_tensor(r, {3, 4}); }, [](Var x) { return log(x); }, {3, 4});
  unary("square", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return square(x); }, {3, 4});
  unary(
      "clamp",
      [](Rng& r) {
        // keep clear of the bounds at +-1
        Tensor t = random_tensor(r, {12}, 2.0);
        for (Index i = 0; i < t.size(); ++i) {
          if (std::abs(std::abs(t[i]) - 1.0) < 0.05) t[i] += 0.1;
        }
        return t;
      },
      [](Var x) { return clamp(x, -1.0, 1.0); }, {12});
  unary("sum", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return sum(x); }, {});
  unary("mean", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return mean(x); }, {});
  unary("sum-last", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return sum_last(x); }, {3});
  unary("softmax", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return softmax(x); }, {3, 4});
  unary("log-softmax", [](Rng& r) { return random_tensor(r, {3, 4}); }, [](Var x) { return log_softmax(x); }, {3, 4});
  unary("reshape", [](Rng& r) { return random_tensor(r, {2, 6}); }, [](Var x) { return reshape(x, {3, 4}); }, {3, 4});
  unary("global-avg-pool", [](Rng& r) { return random_tensor(r, {2, 3, 4, 4}); }, [](Var x) { return global_avg_pool(x); },
        {2, 3});
  unary(
      "dropout",
      [](Rng& r) { return random_tensor(r, {4, 8}); },
      [](Var x) { return dropout(x, 0.5, DropoutMode::train, CounterStream(11, 2, 3)); }, {4, 8});

  cases.push_back({"conv2d",
                   [](Rng& r) {
                     return std::map<std::string, Tensor>{{"x", random_tensor(r, {2, 2, 5, 5})},
                                                          {"w", random_tensor(r, {3, 2, 3, 3}, 0.5)},
                                                          {"b", random_tensor(r, {3})}};
                   },
                   [](Rng& r) -> ScalarProgram {
                     const Tensor w = random_tensor(r, {2, 3, 5, 5});
                     return [w](Graph& g, const std::map<std::string, Var>& in) {
                       return project(g, conv2d(in.at("x"), in.at("w"), in.at("b")), w);
                     };
                   }});
  cases.push_back({"conv2d-1x1",
                   [](Rng& r) {
                     return std::map<std::string, Tensor>{{"x", random_tensor(r, {2, 3, 4, 4})},
                                                          {"w", random_tensor(r, {2, 3, 1, 1})},
                                                          {"b", random_tensor(r, {2})}};
                   },
                   [](Rng& r) -> ScalarProgram {
                     const Tensor w = random_tensor(r, {2, 2, 4, 4});
                     return [w](Graph& g, const std::map<std::string, Var>& in) {
                       return project(g, conv2d(in.at("x"), in.at("w"), in.at("b")), w);
                     };
                   }});
  cases.push_back({"kld",
                   [](Rng& r) {
                     return std::map<std::string, Tensor>{{"mu", random_tensor(r, {3, 4})},
                                                          {"sigma2", positive_tensor(r, {3, 4})}};
                   },
                   [](Rng& r) -> ScalarProgram {
                     const Tensor w = random_tensor(r, {3});
                     return [w](Graph& g, const std::map<std::string, Var>& in) {
                       return project(g, kld(in.at("mu"), in.at("sigma2")), w);
                     };
                   }});
  cases.push_back({"cross-entropy-loss",
                   [](Rng& r) { return one("logits", random_tensor(r, {5, 4}, 2.0)); },
                   [](Rng& r) -> ScalarProgram {
                     const auto labels = random_labels(r, 5, 4);
                     return [labels](Graph&, const std::map<std::string, Var>& in) {
                       return classification_loss(in.at("logits"), labels).total;
                     };
                   }});
  cases.push_back({"variational-loss",
                   [](Rng& r) {
                     return std::map<std::string, Tensor>{{"mu", random_tensor(r, {5, 4})},
                                                          {"logvar", random_tensor(r, {5, 4}, 0.5)}};
                   },
                   [](Rng& r) -> ScalarProgram {
                     const auto labels = random_labels(r, 5, 4);
                     const std::vector<Tensor> eps{random_tensor(r, {5, 4}), random_tensor(r, {5, 4})};
                     const double beta = 0.1 + r.uniform();
                     return [labels, eps, beta](Graph&, const std::map<std::string, Var>& in) {
                       return variational_loss(in.at("mu"), in.at("logvar"), eps, labels, beta).total;
                     };
                   }});
  return cases;
}

struct GradientSummary {
  std::string name;
  int trials = 0;
  double worst = 0.0;
};

/// Runs `trials` random draws of every case; the worst relative error per case.
inline std::vector<GradientSummary> run_gradient_suite(int trials, std::uint64_t seed, double step = 1e-6) {
  std::vector<GradientSummary> out;
  for (const auto& c : gradient_cases()) {
    GradientSummary s{c.name, trials, 0.0};
    Rng rng(seed, hash_name(c.name));
    for (int t = 0; t < trials; ++t) {
      const auto point = c.sample(rng);
      const auto program = c.program(rng);
      s.worst = std::max(s.worst, check_gradient(program, point, step));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mcdrop::testing

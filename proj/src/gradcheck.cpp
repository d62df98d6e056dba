#include "mcdrop/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <stdexcept>

namespace mcdrop {
namespace {

double evaluate(const ScalarProgram& fn, const std::map<std::string, Tensor>& point) {
  Graph g(GraphOptions{.check_finite = true, .record_backward = false});
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : point) vars.emplace(name, g.input(name, t, false));
  return fn(g, vars).value().item();
}

}  // namespace

double check_gradient(const ScalarProgram& fn, const std::map<std::string, Tensor>& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");

  const double f0 = evaluate(fn, point);
  const double f1 = evaluate(fn, point);
  if (std::bit_cast<std::uint64_t>(f0) != std::bit_cast<std::uint64_t>(f1)) {
    throw NondeterministicFunction("check_gradient: function is not deterministic at the given point");
  }

  Gradients analytic;
  {
    Graph g;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : point) vars.emplace(name, g.input(name, t, true));
    analytic = g.backward(fn(g, vars));
  }

  double worst = 0.0;
  std::map<std::string, Tensor> probe = point;
  for (const auto& [name, t] : point) {
    Tensor& p = probe.at(name);
    const Tensor& grad = analytic.at(name);
    for (Index i = 0; i < t.size(); ++i) {
      const double original = p[i];
      p[i] = original + step;
      const double up = evaluate(fn, probe);
      p[i] = original - step;
      const double down = evaluate(fn, probe);
      p[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(grad[i] - numeric) / std::max(1.0, std::abs(grad[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double check_gradient(const ScalarFunction& fn, const Tensor& point, double step) {
  return check_gradient([&fn](Graph& g, const std::map<std::string, Var>& in) { return fn(g, in.at("x")); },
                        std::map<std::string, Tensor>{{"x", point}}, step);
}

}  // namespace mcdrop

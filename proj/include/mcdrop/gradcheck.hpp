#pragma once

#include "mcdrop/autodiff.hpp"

#include <functional>
#include <map>
#include <string>

namespace mcdrop {

/// Scalar-valued program of named inputs.
using ScalarProgram = std::function<Var(Graph&, const std::map<std::string, Var>&)>;
using ScalarFunction = std::function<Var(Graph&, Var)>;

class NondeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Max over all coordinates of |analytic - central difference| / max(1, |analytic|).
/// Every input is differentiated. Throws NondeterministicFunction if two
/// evaluations at the same point disagree.
double check_gradient(const ScalarProgram& fn, const std::map<std::string, Tensor>& point, double step);
double check_gradient(const ScalarFunction& fn, const Tensor& point, double step);

}  // namespace mcdrop

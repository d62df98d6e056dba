#pragma once

#include "mcdrop/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcdrop {

using NodeId = std::size_t;
using Gradients = std::map<std::string, Tensor>;

class Graph;

/// Handle to a value recorded on a Graph tape.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Receives the upstream gradient of a node and adds its contribution into
/// each input gradient. Entries of `inputs` are null for inputs that do not
/// require a gradient.
using BackwardFn = std::function<void(const Eigen::VectorXd& upstream, std::span<Eigen::VectorXd* const> inputs)>;

struct Node {
  std::string op;
  std::string name;  // set for named leaves only
  Tensor value;
  std::vector<NodeId> inputs;
  BackwardFn backward;
  bool requires_grad = false;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(NodeId node, const std::string& op);
  NodeId node;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct GraphOptions {
  bool check_finite = true;
  /// When false nothing is recorded for backward; use for inference.
  bool record_backward = true;
};

/// Eager tape. Ops append nodes in execution order, so the node order is a
/// topological order and backward is a single reverse sweep.
///
/// A Graph is single-threaded. Several graphs may read the same parameter
/// tensors concurrently because leaves hold their own copy.
class Graph {
 public:
  explicit Graph(GraphOptions options = {}) : options_(options) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(std::string name, Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var record(std::string op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Node& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  const GraphOptions& options() const { return options_; }

  /// Reverse sweep from a scalar output. Returns the gradient of every named
  /// leaf that requires one (zeros when the output does not depend on it).
  Gradients backward(Var output);

  /// Number of nodes whose backward ran during the last sweep.
  std::size_t backward_visits() const { return visits_; }

 private:
  GraphOptions options_;
  std::deque<Node> nodes_;
  std::size_t visits_ = 0;
};

/// A forward program: binds named inputs on a graph and returns named outputs.
using Program = std::function<std::map<std::string, Var>(Graph&, const std::map<std::string, Var>&)>;

/// Runs `program` on a fresh graph and returns the output values.
std::map<std::string, Tensor> forward(const Program& program, const std::map<std::string, Tensor>& inputs,
                                      GraphOptions options = {});

}  // namespace mcdrop

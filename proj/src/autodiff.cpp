#include "mcdrop/autodiff.hpp"

#include <optional>

namespace mcdrop {

NonFiniteError::NonFiniteError(NodeId node, const std::string& op)
    : std::runtime_error("non-finite value produced by node " + std::to_string(node) + " (" + op + ")"), node(node) {}

const Tensor& Var::value() const {
  if (graph == nullptr) throw GraphError("unbound Var");
  return graph->node(id).value;
}

bool Var::requires_grad() const { return graph != nullptr && graph->node(id).requires_grad; }

Var Graph::input(std::string name, Tensor value, bool requires_grad) {
  if (options_.check_finite && !value.all_finite()) throw NonFiniteError(nodes_.size(), "input " + name);
  Node& n = nodes_.emplace_back();
  n.op = "input";
  n.name = std::move(name);
  n.value = std::move(value);
  n.requires_grad = requires_grad && options_.record_backward;
  n.value.requires_grad = n.requires_grad;
  return {this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  if (options_.check_finite && !value.all_finite()) throw NonFiniteError(nodes_.size(), "constant");
  Node& n = nodes_.emplace_back();
  n.op = "constant";
  n.value = std::move(value);
  return {this, nodes_.size() - 1};
}

Var Graph::record(std::string op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  const NodeId id = nodes_.size();
  if (options_.check_finite && !value.all_finite()) throw NonFiniteError(id, op);
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.graph != this) throw GraphError("op '" + n.op + "' mixes variables from different graphs");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, id};
}

const Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw GraphError("node " + std::to_string(id) + " has not been computed");
  return nodes_[id];
}

Gradients Graph::backward(Var output) {
  if (output.graph != this) throw GraphError("backward called with a variable from another graph");
  if (output.id >= nodes_.size()) throw GraphError("backward before forward: node " + std::to_string(output.id) +
                                                   " has not been computed");
  const Node& out = nodes_[output.id];
  if (out.value.size() != 1) throw GraphError("backward requires a scalar output, got shape " + to_string(out.value.shape()));

  std::vector<std::optional<Eigen::VectorXd>> grads(output.id + 1);
  grads[output.id] = Eigen::VectorXd::Ones(1);
  visits_ = 0;
  std::vector<Eigen::VectorXd*> slots;
  for (NodeId i = output.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || !grads[i] || !n.backward) continue;
    slots.clear();
    for (NodeId in : n.inputs) {
      if (!nodes_[in].requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (!grads[in]) grads[in] = Eigen::VectorXd::Zero(nodes_[in].value.size());
      slots.push_back(&*grads[in]);
    }
    n.backward(*grads[i], slots);
    ++visits_;
    // Interior gradients are no longer needed once propagated.
    if (n.op != "input") grads[i].reset();
  }

  Gradients result;
  for (NodeId i = 0; i <= output.id; ++i) {
    const Node& n = nodes_[i];
    if (n.op != "input" || !n.requires_grad) continue;
    Tensor g(n.value.shape());
    if (grads[i]) g.data() = *grads[i];
    result.insert_or_assign(n.name, std::move(g));
  }
  return result;
}

std::map<std::string, Tensor> forward(const Program& program, const std::map<std::string, Tensor>& inputs,
                                      GraphOptions options) {
  Graph graph(options);
  std::map<std::string, Var> bound;
  for (const auto& [name, value] : inputs) bound.emplace(name, graph.input(name, value, value.requires_grad));
  std::map<std::string, Tensor> out;
  for (const auto& [name, var] : program(graph, bound)) out.emplace(name, var.value());
  return out;
}

}  // namespace mcdrop

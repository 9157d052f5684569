#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakgcn/rng.hpp"
#include "cakgcn/tensor.hpp"

namespace cakgcn {

// A trainable tensor living outside any tape. Gradients accumulate here
// across backward passes until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool grad_ready = false;

  Parameter() = default;
  Parameter(std::string n, Tensor init)
      : name(std::move(n)), value(std::move(init)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() {
    grad.fill(0.0);
    grad_ready = false;
  }
};

using NodeId = std::int32_t;

// Define-by-run tape. Each op appends a node, so node order is a topological
// order and backward() is a single reverse sweep. Tapes are single-threaded;
// build one per thread.
class Tape {
 public:
  NodeId constant(Tensor v);
  // whole-parameter leaf; backward adds into p.grad
  NodeId leaf(Parameter& p);
  // rows of a [n,d] parameter table as a [k,d] node; backward scatter-adds
  NodeId gather(Parameter& p, std::vector<std::int32_t> rows);
  // single row of a [n,d] parameter table as a [d] node
  NodeId row(Parameter& p, std::int32_t r);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);  // [m,k]x[k,n]; 1-D promoted ([k] -> [1,k] / [k,1])
  NodeId dot(NodeId a, NodeId b);     // vectors -> scalar
  NodeId concat(NodeId a, NodeId b);  // vectors
  NodeId reshape(NodeId a, Shape s);
  // elements of a vector node by index; backward scatter-adds
  NodeId rows(NodeId a, std::vector<std::int32_t> idx);
  NodeId relu(NodeId a);
  NodeId leaky_relu(NodeId a, double slope);
  NodeId sigmoid(NodeId a);
  NodeId softmax(NodeId a);
  NodeId dropout(NodeId a, double rate, bool training, Rng& rng);
  NodeId sum(NodeId a);
  // (x - y)^2 as a scalar node
  NodeId squared_error(NodeId pred, double target);
  // binary cross entropy on a logit, numerically stable; label in {0,1}
  NodeId bce_with_logit(NodeId logit, double label);

  const Tensor& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  // Reverse sweep from a scalar node. Populates grads of every contributing
  // node and accumulates into touched Parameters, marking them grad_ready.
  void backward(NodeId loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Constant, Leaf, Gather, Add, Sub, Mul, Scale, MatMul, Dot, Concat, Reshape,
    Rows, Relu, LeakyRelu, Sigmoid, Softmax, Dropout, Sum, SqErr, BceLogit,
  };

  struct Node {
    Tensor value;
    Tensor grad;
    Op op;
    NodeId in0 = -1;
    NodeId in1 = -1;
    double aux = 0.0;                 // slope / scale / target / label
    Parameter* param = nullptr;       // Leaf, Gather
    std::vector<std::int32_t> index;  // Gather, Rows
    std::vector<std::uint8_t> mask;   // Dropout keep mask
    Shape saved_shape;                // Reshape input shape
  };

  NodeId push(Node n);
  Node& at(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  void backward_node(NodeId id);

  std::vector<Node> nodes_;
};

// Adds 2*lambda*w to every parameter's gradient and marks it ready, returning
// lambda*sum(w^2). The train loop calls this once per step so the optimizer
// update covers all parameters, including ones a sparse batch never touched.
double apply_l2(const std::vector<Parameter*>& params, double lambda);

}  // namespace cakgcn

#include "cakgcn/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace cakgcn {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void check_vector(const Tensor& t, const char* what) {
  if (t.rank() != 1)
    throw std::invalid_argument(std::string(what) + ": expected a vector, got shape " + shape_str(t.shape));
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(v);
  return push(n);
}

NodeId Tape::leaf(Parameter& p) {
  Node n;
  n.op = Op::Leaf;
  n.value = p.value;
  n.param = &p;
  return push(n);
}

NodeId Tape::gather(Parameter& p, std::vector<std::int32_t> rows) {
  if (p.value.rank() != 2)
    throw std::invalid_argument("gather from non-matrix parameter " + p.name);
  std::int64_t d = p.value.cols();
  std::int64_t k = static_cast<std::int64_t>(rows.size());
  Node n;
  n.op = Op::Gather;
  n.param = &p;
  n.value = Tensor({k, d});
  for (std::int64_t i = 0; i < k; ++i) {
    std::int32_t r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= p.value.rows())
      throw std::out_of_range("gather row " + std::to_string(r) + " out of range for " + p.name);
    for (std::int64_t j = 0; j < d; ++j) n.value[i * d + j] = p.value[r * d + j];
  }
  n.index = std::move(rows);
  return push(n);
}

NodeId Tape::row(Parameter& p, std::int32_t r) {
  NodeId g = gather(p, {r});
  return reshape(g, {p.value.cols()});
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!same_shape(ta, tb))
    throw std::invalid_argument("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::Add;
  n.in0 = a;
  n.in1 = b;
  n.value = ta;
  for (std::int64_t i = 0; i < n.value.numel(); ++i) n.value[i] += tb[i];
  return push(n);
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!same_shape(ta, tb))
    throw std::invalid_argument("sub: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::Sub;
  n.in0 = a;
  n.in1 = b;
  n.value = ta;
  for (std::int64_t i = 0; i < n.value.numel(); ++i) n.value[i] -= tb[i];
  return push(n);
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!same_shape(ta, tb))
    throw std::invalid_argument("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::Mul;
  n.in0 = a;
  n.in1 = b;
  n.value = ta;
  for (std::int64_t i = 0; i < n.value.numel(); ++i) n.value[i] *= tb[i];
  return push(n);
}

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::Scale;
  n.in0 = a;
  n.aux = c;
  n.value = val(a);
  for (auto& v : n.value.data) v *= c;
  return push(n);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  bool a_vec = ta.rank() == 1;
  bool b_vec = tb.rank() == 1;
  if (ta.rank() > 2 || tb.rank() > 2 || ta.rank() == 0 || tb.rank() == 0)
    throw std::invalid_argument("matmul: unsupported ranks " + shape_str(ta.shape) + ", " + shape_str(tb.shape));
  std::int64_t m = a_vec ? 1 : ta.shape[0];
  std::int64_t ka = a_vec ? ta.shape[0] : ta.shape[1];
  std::int64_t kb = b_vec ? tb.shape[0] : tb.shape[0];
  std::int64_t p = b_vec ? 1 : tb.shape[1];
  if (ka != kb)
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
  Node n;
  n.op = Op::MatMul;
  n.in0 = a;
  n.in1 = b;
  Shape out_shape;
  if (a_vec && b_vec)
    out_shape = {1};
  else if (a_vec)
    out_shape = {p};
  else if (b_vec)
    out_shape = {m};
  else
    out_shape = {m, p};
  n.value = Tensor(std::move(out_shape));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < ka; ++k) acc += ta[i * ka + k] * tb[k * p + j];
      n.value[i * p + j] = acc;
    }
  return push(n);
}

NodeId Tape::dot(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_vector(ta, "dot");
  check_vector(tb, "dot");
  if (ta.numel() != tb.numel())
    throw std::invalid_argument("dot: length mismatch " + std::to_string(ta.numel()) + " vs " +
                                std::to_string(tb.numel()));
  Node n;
  n.op = Op::Dot;
  n.in0 = a;
  n.in1 = b;
  double acc = 0.0;
  for (std::int64_t i = 0; i < ta.numel(); ++i) acc += ta[i] * tb[i];
  n.value = Tensor::scalar(acc);
  return push(n);
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_vector(ta, "concat");
  check_vector(tb, "concat");
  Node n;
  n.op = Op::Concat;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor({ta.numel() + tb.numel()});
  for (std::int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i];
  for (std::int64_t i = 0; i < tb.numel(); ++i) n.value[ta.numel() + i] = tb[i];
  return push(n);
}

NodeId Tape::reshape(NodeId a, Shape s) {
  const Tensor& ta = val(a);
  if (numel_of(s) != ta.numel())
    throw std::invalid_argument("reshape: " + shape_str(ta.shape) + " to " + shape_str(s));
  Node n;
  n.op = Op::Reshape;
  n.in0 = a;
  n.saved_shape = ta.shape;
  n.value = Tensor(std::move(s), ta.data);
  return push(n);
}

NodeId Tape::rows(NodeId a, std::vector<std::int32_t> idx) {
  const Tensor& ta = val(a);
  check_vector(ta, "rows");
  Node n;
  n.op = Op::Rows;
  n.in0 = a;
  n.value = Tensor({static_cast<std::int64_t>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= ta.numel())
      throw std::out_of_range("rows: index " + std::to_string(idx[i]) + " out of range");
    n.value[static_cast<std::int64_t>(i)] = ta[idx[i]];
  }
  n.index = std::move(idx);
  return push(n);
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = Op::Relu;
  n.in0 = a;
  n.value = val(a);
  for (auto& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(n);
}

NodeId Tape::leaky_relu(NodeId a, double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
  Node n;
  n.op = Op::LeakyRelu;
  n.in0 = a;
  n.aux = slope;
  n.value = val(a);
  for (auto& v : n.value.data) v = v > 0.0 ? v : slope * v;
  return push(n);
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::Sigmoid;
  n.in0 = a;
  n.value = val(a);
  for (auto& v : n.value.data) v = stable_sigmoid(v);
  return push(n);
}

NodeId Tape::softmax(NodeId a) {
  const Tensor& ta = val(a);
  check_vector(ta, "softmax");
  if (ta.numel() == 0) throw std::invalid_argument("softmax: empty input");
  Node n;
  n.op = Op::Softmax;
  n.in0 = a;
  n.value = ta;
  double mx = n.value[0];
  for (double v : n.value.data) mx = std::max(mx, v);
  double total = 0.0;
  for (auto& v : n.value.data) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : n.value.data) v /= total;
  return push(n);
}

NodeId Tape::dropout(NodeId a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0,1)");
  if (!training || rate == 0.0) return a;
  Node n;
  n.op = Op::Dropout;
  n.in0 = a;
  n.value = val(a);
  n.aux = 1.0 / (1.0 - rate);
  n.mask.resize(n.value.data.size());
  for (std::size_t i = 0; i < n.value.data.size(); ++i) {
    bool keep = !rng.next_bernoulli(rate);
    n.mask[i] = keep ? 1 : 0;
    n.value.data[i] = keep ? n.value.data[i] * n.aux : 0.0;
  }
  return push(n);
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.in0 = a;
  double acc = 0.0;
  for (double v : val(a).data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(n);
}

NodeId Tape::squared_error(NodeId pred, double target) {
  if (!val(pred).is_scalar()) throw std::invalid_argument("squared_error: prediction must be scalar");
  Node n;
  n.op = Op::SqErr;
  n.in0 = pred;
  n.aux = target;
  double diff = val(pred).scalar_value() - target;
  n.value = Tensor::scalar(diff * diff);
  return push(n);
}

NodeId Tape::bce_with_logit(NodeId logit, double label) {
  if (!val(logit).is_scalar()) throw std::invalid_argument("bce_with_logit: logit must be scalar");
  if (label != 0.0 && label != 1.0) throw std::invalid_argument("bce_with_logit: label must be 0 or 1");
  Node n;
  n.op = Op::BceLogit;
  n.in0 = logit;
  n.aux = label;
  double x = val(logit).scalar_value();
  // -y*log(sigmoid(x)) - (1-y)*log(1-sigmoid(x)) = softplus(x) - y*x
  n.value = Tensor::scalar(softplus(x) - label * x);
  return push(n);
}

void Tape::backward(NodeId loss) {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
    throw std::out_of_range("backward: bad node id");
  if (!val(loss).is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
  for (NodeId i = 0; i <= loss; ++i) {
    Node& n = at(i);
    n.grad = Tensor::zeros(n.value.shape);
  }
  at(loss).grad[0] = 1.0;
  for (NodeId i = loss; i >= 0; --i) backward_node(i);
}

void Tape::backward_node(NodeId id) {
  Node& n = at(id);
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Constant:
      break;
    case Op::Leaf: {
      Parameter& p = *n.param;
      for (std::int64_t i = 0; i < g.numel(); ++i) p.grad[i] += g[i];
      p.grad_ready = true;
      break;
    }
    case Op::Gather: {
      Parameter& p = *n.param;
      std::int64_t d = p.value.cols();
      for (std::size_t i = 0; i < n.index.size(); ++i) {
        std::int64_t r = n.index[i];
        for (std::int64_t j = 0; j < d; ++j)
          p.grad[r * d + j] += g[static_cast<std::int64_t>(i) * d + j];
      }
      p.grad_ready = true;
      break;
    }
    case Op::Add: {
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor& a = at(n.in0).value;
      const Tensor& b = at(n.in1).value;
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::Scale: {
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.aux;
      break;
    }
    case Op::MatMul: {
      const Tensor& a = at(n.in0).value;
      const Tensor& b = at(n.in1).value;
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      bool a_vec = a.rank() == 1;
      bool b_vec = b.rank() == 1;
      std::int64_t m = a_vec ? 1 : a.shape[0];
      std::int64_t k = a_vec ? a.shape[0] : a.shape[1];
      std::int64_t p = b_vec ? 1 : b.shape[1];
      // dA = dC * B^T ; dB = A^T * dC
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < p; ++j) acc += g[i * p + j] * b[kk * p + j];
          ga[i * k + kk] += acc;
        }
      for (std::int64_t kk = 0; kk < k; ++kk)
        for (std::int64_t j = 0; j < p; ++j) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < m; ++i) acc += a[i * k + kk] * g[i * p + j];
          gb[kk * p + j] += acc;
        }
      break;
    }
    case Op::Dot: {
      const Tensor& a = at(n.in0).value;
      const Tensor& b = at(n.in1).value;
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      double gs = g[0];
      for (std::int64_t i = 0; i < a.numel(); ++i) {
        ga[i] += gs * b[i];
        gb[i] += gs * a[i];
      }
      break;
    }
    case Op::Concat: {
      Tensor& ga = at(n.in0).grad;
      Tensor& gb = at(n.in1).grad;
      std::int64_t na = ga.numel();
      for (std::int64_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
      break;
    }
    case Op::Reshape: {
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
      break;
    }
    case Op::Rows: {
      Tensor& ga = at(n.in0).grad;
      for (std::size_t i = 0; i < n.index.size(); ++i) ga[n.index[i]] += g[static_cast<std::int64_t>(i)];
      break;
    }
    case Op::Relu: {
      const Tensor& a = at(n.in0).value;
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += a[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::LeakyRelu: {
      const Tensor& a = at(n.in0).value;
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += a[i] > 0.0 ? g[i] : n.aux * g[i];
      break;
    }
    case Op::Sigmoid: {
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double s = n.value[i];
        ga[i] += g[i] * s * (1.0 - s);
      }
      break;
    }
    case Op::Softmax: {
      Tensor& ga = at(n.in0).grad;
      double inner = 0.0;
      for (std::int64_t i = 0; i < g.numel(); ++i) inner += g[i] * n.value[i];
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += n.value[i] * (g[i] - inner);
      break;
    }
    case Op::Dropout: {
      Tensor& ga = at(n.in0).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i)
        if (n.mask[static_cast<std::size_t>(i)]) ga[i] += g[i] * n.aux;
      break;
    }
    case Op::Sum: {
      Tensor& ga = at(n.in0).grad;
      double gs = g[0];
      for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += gs;
      break;
    }
    case Op::SqErr: {
      Tensor& ga = at(n.in0).grad;
      ga[0] += g[0] * 2.0 * (at(n.in0).value[0] - n.aux);
      break;
    }
    case Op::BceLogit: {
      Tensor& ga = at(n.in0).grad;
      ga[0] += g[0] * (stable_sigmoid(at(n.in0).value[0]) - n.aux);
      break;
    }
  }
}

void Tape::clear() { nodes_.clear(); }

double apply_l2(const std::vector<Parameter*>& params, double lambda) {
  double penalty = 0.0;
  for (Parameter* p : params) {
    double sq = 0.0;
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      double w = p->value[i];
      sq += w * w;
      p->grad[i] += 2.0 * lambda * w;
    }
    penalty += lambda * sq;
    p->grad_ready = true;
  }
  return penalty;
}

}  // namespace cakgcn

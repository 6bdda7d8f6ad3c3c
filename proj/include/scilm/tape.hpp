#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "scilm/matrix.hpp"

namespace scilm {

using NodeId = int;

// Reverse-mode tape over a fixed primitive set. Each call records one node
// holding the forward value; backward() replays the record in reverse,
// accumulating gradients into every node on a differentiable path.
//
// A tape is single-owner: one differentiation context per training step.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kMatMul,
    kAdd,
    kRelu,
    kSoftmax,
    kCosineSim,
    kCosineSimSqNorm,
    kSqDist,
    kWeightedSumRows,
    kLinComb,
    kConcatScalars,
    kHingeFromSq,
    kSumSq,
  };

  static constexpr double kCosineNormFloor = 1e-12;

  NodeId leaf(Matrix value, bool requires_grad = false) {
    return push(Op::kLeaf, {}, std::move(value), requires_grad);
  }

  NodeId constant(Matrix value) { return leaf(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b) {
    return push(Op::kMatMul, {a, b}, scilm::matmul(value(a), value(b)));
  }

  NodeId add(NodeId a, NodeId b) { return push(Op::kAdd, {a, b}, scilm::add(value(a), value(b))); }

  NodeId relu(NodeId x) { return push(Op::kRelu, {x}, scilm::relu(value(x))); }

  NodeId softmax(NodeId v) { return push(Op::kSoftmax, {v}, scilm::softmax(value(v))); }

  // Cosine similarity with denominators floored at kCosineNormFloor. A floored
  // norm is treated as a constant in the backward pass and counted so callers
  // can surface the event.
  NodeId cosine_sim(NodeId u, NodeId v) {
    const Matrix& mu = value(u);
    const Matrix& mv = value(v);
    if (mu.size() != mv.size())
      throw ContractViolation("Tape::cosine_sim: length mismatch " + mu.shape() + " vs " +
                              mv.shape());
    double nu = norm2(mu), nv = norm2(mv);
    const bool fu = nu < kCosineNormFloor, fv = nv < kCosineNormFloor;
    if (fu) nu = kCosineNormFloor;
    if (fv) nv = kCosineNormFloor;
    if (fu || fv) ++degenerate_cosine_count_;
    const double c = dot(mu, mv) / (nu * nv);
    const NodeId id = push(Op::kCosineSim, {u, v}, Matrix::scalar(c));
    Node& n = nodes_[id];
    n.aux = nu;
    n.aux2 = nv;
    n.flag = fu;
    n.flag2 = fv;
    return id;
  }

  // u'v / (||u||^2 ||v||^2): the squared-norm denominator form, not scale
  // invariant, kept for comparison against the standard cosine.
  NodeId cosine_sim_sqnorm(NodeId u, NodeId v) {
    const Matrix& mu = value(u);
    const Matrix& mv = value(v);
    if (mu.size() != mv.size())
      throw ContractViolation("Tape::cosine_sim_sqnorm: length mismatch " + mu.shape() + " vs " +
                              mv.shape());
    double nu = scilm::sum_sq(mu), nv = scilm::sum_sq(mv);
    const bool fu = nu < kCosineNormFloor, fv = nv < kCosineNormFloor;
    if (fu) nu = kCosineNormFloor;
    if (fv) nv = kCosineNormFloor;
    if (fu || fv) ++degenerate_cosine_count_;
    const double c = dot(mu, mv) / (nu * nv);
    const NodeId id = push(Op::kCosineSimSqNorm, {u, v}, Matrix::scalar(c));
    Node& n = nodes_[id];
    n.aux = nu;
    n.aux2 = nv;
    n.flag = fu;
    n.flag2 = fv;
    return id;
  }

  NodeId sq_dist(NodeId u, NodeId v) {
    return push(Op::kSqDist, {u, v}, Matrix::scalar(scilm::sq_dist(value(u), value(v))));
  }

  NodeId weighted_sum_rows(NodeId x, NodeId w) {
    return push(Op::kWeightedSumRows, {x, w}, scilm::weighted_sum_rows(value(x), value(w)));
  }

  // sum_i coeffs[i] * inputs[i], all inputs same shape.
  NodeId lin_comb(std::vector<NodeId> inputs, std::vector<double> coeffs) {
    if (inputs.empty() || inputs.size() != coeffs.size())
      throw ContractViolation("Tape::lin_comb: need matching non-empty inputs and coeffs");
    Matrix out(value(inputs[0]).rows(), value(inputs[0]).cols());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const Matrix& m = value(inputs[t]);
      if (!m.same_shape(out))
        throw ContractViolation("Tape::lin_comb: shape mismatch at input " + std::to_string(t));
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeffs[t] * m[i];
    }
    const NodeId id = push(Op::kLinComb, std::move(inputs), std::move(out));
    nodes_[id].coeffs = std::move(coeffs);
    return id;
  }

  NodeId mean_scalars(std::vector<NodeId> inputs) {
    const std::vector<double> coeffs(inputs.size(), 1.0 / static_cast<double>(inputs.size()));
    return lin_comb(std::move(inputs), coeffs);
  }

  NodeId concat_scalars(std::vector<NodeId> inputs) {
    if (inputs.empty()) throw ContractViolation("Tape::concat_scalars: empty input");
    Matrix out(inputs.size(), 1);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!value(inputs[i]).is_scalar())
        throw ContractViolation("Tape::concat_scalars: input " + std::to_string(i) + " not scalar");
      out[i] = value(inputs[i])[0];
    }
    return push(Op::kConcatScalars, std::move(inputs), std::move(out));
  }

  // max(margin - s, 0) for scalar s; subgradient at the kink is 0.
  NodeId hinge_from_sq(NodeId s, double margin) {
    if (!value(s).is_scalar()) throw ContractViolation("Tape::hinge_from_sq: input not scalar");
    const double h = margin - value(s)[0];
    const NodeId id = push(Op::kHingeFromSq, {s}, Matrix::scalar(h > 0.0 ? h : 0.0));
    nodes_[id].aux = margin;
    return id;
  }

  NodeId sum_sq(NodeId x) { return push(Op::kSumSq, {x}, Matrix::scalar(scilm::sum_sq(value(x)))); }

  const Matrix& value(NodeId id) const { return nodes_[at(id)].value; }

  double scalar_value(NodeId id) const {
    const Matrix& m = value(id);
    if (!m.is_scalar()) throw ContractViolation("Tape::scalar_value: node is not scalar");
    return m[0];
  }

  bool requires_grad(NodeId id) const { return nodes_[at(id)].requires_grad; }

  // Propagates d(loss)/d(node) for every node on a differentiable path to
  // `loss_node`, which must be scalar. Traversal is reverse creation order,
  // a valid reverse topological order by construction.
  void backward(NodeId loss_node, double seed = 1.0) {
    Node& loss = nodes_[at(loss_node)];
    if (!loss.value.is_scalar())
      throw ContractViolation("Tape::backward: loss node is not scalar (" + loss.value.shape() +
                              ")");
    for (Node& n : nodes_) {
      if (!n.requires_grad) continue;
      n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    if (!loss.requires_grad) return;  // no parameter feeds the loss
    loss.grad[0] = seed;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad) continue;
      propagate(n);
    }
  }

  const Matrix& grad(NodeId id) const {
    const Node& n = nodes_[at(id)];
    if (!n.requires_grad)
      throw ContractViolation("Tape::grad: node does not require gradients");
    if (n.grad.empty()) throw ContractViolation("Tape::grad: backward() has not run");
    return n.grad;
  }

  std::size_t node_count() const { return nodes_.size(); }
  int degenerate_cosine_count() const { return degenerate_cosine_count_; }

  // Distances from the recorded forward pass to the nearest piecewise
  // boundary: ReLU inputs to 0, hinge arguments to the margin, cosine inputs
  // to a zero norm. Finite-difference probes are only trustworthy when these
  // are comfortably larger than the probe step.
  struct KinkReport {
    double relu_gap = std::numeric_limits<double>::infinity();
    double hinge_gap = std::numeric_limits<double>::infinity();
    double cosine_norm = std::numeric_limits<double>::infinity();
  };

  KinkReport kink_report() const {
    KinkReport kr;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::kRelu: {
          const Matrix& x = nodes_[n.inputs[0]].value;
          for (std::size_t i = 0; i < x.size(); ++i)
            kr.relu_gap = std::min(kr.relu_gap, std::fabs(x[i]));
          break;
        }
        case Op::kHingeFromSq:
          kr.hinge_gap = std::min(kr.hinge_gap, std::fabs(n.aux - nodes_[n.inputs[0]].value[0]));
          break;
        case Op::kCosineSim:
        case Op::kCosineSimSqNorm:
          kr.cosine_norm = std::min(kr.cosine_norm, std::min(n.aux, n.aux2));
          break;
        default:
          break;
      }
    }
    return kr;
  }

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    double aux = 0.0, aux2 = 0.0;  // op-specific cache (norms, margin)
    bool flag = false, flag2 = false;
    std::vector<double> coeffs;
  };

  std::size_t at(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ContractViolation("Tape: node id " + std::to_string(id) + " out of range");
    return static_cast<std::size_t>(id);
  }

  NodeId push(Op op, std::vector<NodeId> inputs, Matrix value, bool leaf_requires_grad = false) {
    Node n;
    n.op = op;
    n.requires_grad = leaf_requires_grad;
    for (NodeId in : inputs) n.requires_grad = n.requires_grad || nodes_[at(in)].requires_grad;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  Matrix* grad_of(NodeId id) {
    Node& n = nodes_[at(id)];
    return n.requires_grad ? &n.grad : nullptr;
  }

  void propagate(Node& n) {
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Matrix& a = nodes_[n.inputs[0]].value;
        const Matrix& b = nodes_[n.inputs[1]].value;
        if (Matrix* da = grad_of(n.inputs[0])) {
          // dA += dC * B^T
          for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t k = 0; k < a.cols(); ++k) {
              double s = 0.0;
              for (std::size_t j = 0; j < b.cols(); ++j) s += g(i, j) * b(k, j);
              (*da)(i, k) += s;
            }
        }
        if (Matrix* db = grad_of(n.inputs[1])) {
          // dB += A^T * dC
          for (std::size_t k = 0; k < b.rows(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, k) * g(i, j);
              (*db)(k, j) += s;
            }
        }
        break;
      }
      case Op::kAdd:
        for (int side = 0; side < 2; ++side)
          if (Matrix* d = grad_of(n.inputs[side]))
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
        break;
      case Op::kRelu: {
        if (Matrix* dx = grad_of(n.inputs[0])) {
          const Matrix& x = nodes_[n.inputs[0]].value;
          for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) (*dx)[i] += g[i];
        }
        break;
      }
      case Op::kSoftmax: {
        if (Matrix* dx = grad_of(n.inputs[0])) {
          // dx = y .* (dy - <y, dy>)
          const Matrix& y = n.value;
          double inner = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * g[i];
          for (std::size_t i = 0; i < y.size(); ++i) (*dx)[i] += y[i] * (g[i] - inner);
        }
        break;
      }
      case Op::kCosineSim: {
        const Matrix& u = nodes_[n.inputs[0]].value;
        const Matrix& v = nodes_[n.inputs[1]].value;
        const double gs = g[0];
        const double nu = n.aux, nv = n.aux2;
        const double c = n.value[0];
        if (Matrix* du = grad_of(n.inputs[0])) {
          for (std::size_t i = 0; i < u.size(); ++i) {
            double t = v[i] / (nu * nv);
            if (!n.flag) t -= c * u[i] / (nu * nu);  // floored norm is constant
            (*du)[i] += gs * t;
          }
        }
        if (Matrix* dv = grad_of(n.inputs[1])) {
          for (std::size_t i = 0; i < v.size(); ++i) {
            double t = u[i] / (nu * nv);
            if (!n.flag2) t -= c * v[i] / (nv * nv);
            (*dv)[i] += gs * t;
          }
        }
        break;
      }
      case Op::kCosineSimSqNorm: {
        const Matrix& u = nodes_[n.inputs[0]].value;
        const Matrix& v = nodes_[n.inputs[1]].value;
        const double gs = g[0];
        const double nu = n.aux, nv = n.aux2;  // squared norms
        const double c = n.value[0];
        if (Matrix* du = grad_of(n.inputs[0])) {
          for (std::size_t i = 0; i < u.size(); ++i) {
            double t = v[i] / (nu * nv);
            if (!n.flag) t -= 2.0 * c * u[i] / nu;
            (*du)[i] += gs * t;
          }
        }
        if (Matrix* dv = grad_of(n.inputs[1])) {
          for (std::size_t i = 0; i < v.size(); ++i) {
            double t = u[i] / (nu * nv);
            if (!n.flag2) t -= 2.0 * c * v[i] / nv;
            (*dv)[i] += gs * t;
          }
        }
        break;
      }
      case Op::kSqDist: {
        const Matrix& u = nodes_[n.inputs[0]].value;
        const Matrix& v = nodes_[n.inputs[1]].value;
        const double gs = g[0];
        Matrix* du = grad_of(n.inputs[0]);
        Matrix* dv = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < u.size(); ++i) {
          const double d = 2.0 * gs * (u[i] - v[i]);
          if (du) (*du)[i] += d;
          if (dv) (*dv)[i] -= d;
        }
        break;
      }
      case Op::kWeightedSumRows: {
        const Matrix& x = nodes_[n.inputs[0]].value;
        const Matrix& w = nodes_[n.inputs[1]].value;
        if (Matrix* dx = grad_of(n.inputs[0])) {
          for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) (*dx)(i, j) += w[i] * g[j];
        }
        if (Matrix* dw = grad_of(n.inputs[1])) {
          for (std::size_t i = 0; i < x.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j) * g[j];
            (*dw)[i] += s;
          }
        }
        break;
      }
      case Op::kLinComb:
        for (std::size_t t = 0; t < n.inputs.size(); ++t)
          if (Matrix* d = grad_of(n.inputs[t])) {
            const double c = n.coeffs[t];
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += c * g[i];
          }
        break;
      case Op::kConcatScalars:
        for (std::size_t t = 0; t < n.inputs.size(); ++t)
          if (Matrix* d = grad_of(n.inputs[t])) (*d)[0] += g[t];
        break;
      case Op::kHingeFromSq: {
        if (Matrix* ds = grad_of(n.inputs[0])) {
          const double s = nodes_[n.inputs[0]].value[0];
          if (n.aux - s > 0.0) (*ds)[0] -= g[0];
        }
        break;
      }
      case Op::kSumSq: {
        if (Matrix* dx = grad_of(n.inputs[0])) {
          const Matrix& x = nodes_[n.inputs[0]].value;
          for (std::size_t i = 0; i < x.size(); ++i) (*dx)[i] += 2.0 * g[0] * x[i];
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  int degenerate_cosine_count_ = 0;
};

// Central-difference gradient oracle: (f(p+eps) - f(p-eps)) / (2 eps) per
// coordinate, over a flat list of parameter matrices.
inline std::vector<Matrix> finite_difference_gradient(
    const std::function<double(const std::vector<Matrix>&)>& f, std::vector<Matrix> params,
    double eps) {
  if (eps <= 0.0) throw ContractViolation("finite_difference_gradient: eps must be positive");
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const Matrix& p : params) grads.emplace_back(p.rows(), p.cols());
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + eps;
      const double fp = f(params);
      params[t][i] = saved - eps;
      const double fm = f(params);
      params[t][i] = saved;
      grads[t][i] = (fp - fm) / (2.0 * eps);
    }
  }
  return grads;
}

// |a - b| / max(|a|, |b|, 1e-8), the comparison used by the gradient checks.
inline double relative_error(double a, double b) {
  const double denom = std::max(std::max(std::fabs(a), std::fabs(b)), 1e-8);
  return std::fabs(a - b) / denom;
}

}  // namespace scilm

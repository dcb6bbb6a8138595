#include "confae/tape.hpp"

#include "confae/errors.hpp"

#include <cmath>
#include <string>

namespace confae::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

NodeId Tape::push(Node node) {
  backward_done_ = false;
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

const Tape::Node& Tape::at(NodeId id) const {
  if (id.index >= nodes_.size()) throw UsageError("tape: node does not belong to this tape");
  return nodes_[id.index];
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::variable(Matrix value) {
  Node n;
  n.op = Op::Variable;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.cols() != nb.value.rows()) throw ShapeError("tape matmul: inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.value.noalias() = na.value * nb.value;
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::matmul_transposed(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.rows() != nb.value.rows()) throw ShapeError("tape matmul_transposed: row counts differ");
  Node n;
  n.op = Op::MatMulTransposed;
  n.value.noalias() = na.value.transpose() * nb.value;
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
  const Node& nx = at(x);
  const Node& nb = at(bias);
  if (nb.value.cols() != 1 || nb.value.rows() != nx.value.rows()) throw ShapeError("tape add_bias: bias shape");
  Node n;
  n.op = Op::AddBias;
  n.value = nx.value.colwise() + nb.value.col(0);
  n.inputs = {x.index, bias.index};
  n.needs_grad = nx.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::activate(NodeId x, Activation act) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::Activate;
  n.act = act;
  n.value = nx.value.unaryExpr([act](double v) { return act.apply(v); });
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::activate_derivative(NodeId x, Activation act) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::ActivateDerivative;
  n.act = act;
  n.value = nx.value.unaryExpr([act](double v) { return act.derivative(v); });
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad && act.has_curvature();
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  require_same_shape(na.value, nb.value, "tape add");
  Node n;
  n.op = Op::Add;
  n.value = na.value + nb.value;
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  require_same_shape(na.value, nb.value, "tape sub");
  Node n;
  n.op = Op::Sub;
  n.value = na.value - nb.value;
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  require_same_shape(na.value, nb.value, "tape hadamard");
  Node n;
  n.op = Op::Hadamard;
  n.value = na.value.cwiseProduct(nb.value);
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::divide(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  require_same_shape(na.value, nb.value, "tape divide");
  Node n;
  n.op = Op::Divide;
  n.value = na.value.cwiseQuotient(nb.value);
  n.inputs = {a.index, b.index};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Tape::square(NodeId x) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::Square;
  n.value = nx.value.array().square().matrix();
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::abs(NodeId x) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::Abs;
  n.value = nx.value.cwiseAbs();
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::affine(NodeId x, double scale, double shift) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::Affine;
  n.scale = scale;
  n.value = (scale * nx.value.array() + shift).matrix();
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::repeat_columns(NodeId x, int times) {
  if (times < 1) throw UsageError("tape repeat_columns: times must be >= 1");
  const Node& nx = at(x);
  Node n;
  n.op = Op::RepeatColumns;
  n.count = times;
  n.value.resize(nx.value.rows(), nx.value.cols() * times);
  for (Eigen::Index j = 0; j < nx.value.cols(); ++j)
    for (int k = 0; k < times; ++k) n.value.col(j * times + k) = nx.value.col(j);
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::column_sq_norms(NodeId x) {
  const Node& nx = at(x);
  Node n;
  n.op = Op::ColumnSqNorms;
  n.value = nx.value.colwise().squaredNorm();
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::block_mean(NodeId x, int block) {
  const Node& nx = at(x);
  if (block < 1 || nx.value.cols() % block != 0) throw ShapeError("tape block_mean: columns not divisible by block");
  const Eigen::Index groups = nx.value.cols() / block;
  Node n;
  n.op = Op::BlockMean;
  n.count = block;
  n.value = Matrix::Zero(nx.value.rows(), groups);
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (int k = 0; k < block; ++k) n.value.col(g) += nx.value.col(g * block + k);
    n.value.col(g) /= static_cast<double>(block);
  }
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::mean(NodeId x) {
  const Node& nx = at(x);
  if (nx.value.size() == 0) throw UsageError("tape mean: empty node");
  Node n;
  n.op = Op::Mean;
  n.value = Matrix::Constant(1, 1, nx.value.mean());
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

NodeId Tape::pairwise_distances(NodeId x) {
  const Node& nx = at(x);
  const Eigen::Index cols = nx.value.cols();
  if (cols < 2) throw UsageError("tape pairwise_distances: need at least two columns");
  Node n;
  n.op = Op::PairwiseDistances;
  n.value.resize(1, cols * (cols - 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < cols; ++i)
    for (Eigen::Index j = i + 1; j < cols; ++j) n.value(0, p++) = (nx.value.col(i) - nx.value.col(j)).norm();
  n.inputs = {x.index, x.index};
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const { return at(id).value; }

double Tape::scalar(NodeId id) const {
  const Matrix& v = at(id).value;
  if (v.size() != 1) throw ShapeError("tape scalar: node is not 1x1");
  return v(0, 0);
}

bool Tape::requires_grad(NodeId id) const { return at(id).needs_grad; }

Matrix Tape::gradient(NodeId id) const {
  const Node& n = at(id);
  if (!backward_done_) throw UsageError("tape gradient: backward has not been run");
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::accumulate(std::size_t index, const Matrix& delta) {
  Node& n = nodes_[index];
  if (!n.needs_grad) return;
  if (n.adjoint.size() == 0) {
    n.adjoint = delta;
  } else {
    n.adjoint += delta;
  }
}

void Tape::backward(NodeId root) {
  const Node& r = at(root);
  if (r.value.size() != 1) throw ShapeError("tape backward: root must be a 1x1 node");
  for (Node& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[root.index].adjoint = Matrix::Ones(1, 1);
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (nodes_[i].needs_grad && nodes_[i].adjoint.size() != 0) propagate(i);
  }
  backward_done_ = true;
}

void Tape::propagate(std::size_t index) {
  const Node& n = nodes_[index];
  const Matrix& g = n.adjoint;
  const auto [ia, ib] = n.inputs;
  const Matrix& a = nodes_[ia].value;
  const Matrix& b = nodes_[ib].value;
  const bool ga = nodes_[ia].needs_grad;
  const bool gb = nodes_[ib].needs_grad;

  switch (n.op) {
    case Op::Constant:
    case Op::Variable:
      break;
    case Op::MatMul:
      if (ga) accumulate(ia, g * b.transpose());
      if (gb) accumulate(ib, a.transpose() * g);
      break;
    case Op::MatMulTransposed:
      if (ga) accumulate(ia, b * g.transpose());
      if (gb) accumulate(ib, a * g);
      break;
    case Op::AddBias:
      if (ga) accumulate(ia, g);
      if (gb) accumulate(ib, g.rowwise().sum());
      break;
    case Op::Activate: {
      const Activation act = n.act;
      accumulate(ia, g.cwiseProduct(a.unaryExpr([act](double v) { return act.derivative(v); })));
      break;
    }
    case Op::ActivateDerivative: {
      const Activation act = n.act;
      accumulate(ia, g.cwiseProduct(a.unaryExpr([act](double v) { return act.second_derivative(v); })));
      break;
    }
    case Op::Add:
      if (ga) accumulate(ia, g);
      if (gb) accumulate(ib, g);
      break;
    case Op::Sub:
      if (ga) accumulate(ia, g);
      if (gb) accumulate(ib, -g);
      break;
    case Op::Hadamard:
      if (ga) accumulate(ia, g.cwiseProduct(b));
      if (gb) accumulate(ib, g.cwiseProduct(a));
      break;
    case Op::Divide:
      if (ga) accumulate(ia, g.cwiseQuotient(b));
      if (gb) accumulate(ib, -(g.cwiseProduct(n.value)).cwiseQuotient(b));
      break;
    case Op::Square:
      accumulate(ia, 2.0 * g.cwiseProduct(a));
      break;
    case Op::Abs:
      accumulate(ia, g.cwiseProduct(a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); })));
      break;
    case Op::Affine:
      accumulate(ia, n.scale * g);
      break;
    case Op::RepeatColumns: {
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (int k = 0; k < n.count; ++k) d.col(j) += g.col(j * n.count + k);
      accumulate(ia, d);
      break;
    }
    case Op::ColumnSqNorms: {
      Matrix d = a;
      for (Eigen::Index j = 0; j < a.cols(); ++j) d.col(j) *= 2.0 * g(0, j);
      accumulate(ia, d);
      break;
    }
    case Op::BlockMean: {
      Matrix d(a.rows(), a.cols());
      const double inv = 1.0 / static_cast<double>(n.count);
      for (Eigen::Index grp = 0; grp < g.cols(); ++grp)
        for (int k = 0; k < n.count; ++k) d.col(grp * n.count + k) = inv * g.col(grp);
      accumulate(ia, d);
      break;
    }
    case Op::Mean:
      accumulate(ia, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      break;
    case Op::PairwiseDistances: {
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      Eigen::Index p = 0;
      for (Eigen::Index i = 0; i < a.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < a.cols(); ++j, ++p) {
          const double dist = n.value(0, p);
          if (dist == 0.0) continue;
          const Eigen::VectorXd step = (g(0, p) / dist) * (a.col(i) - a.col(j));
          d.col(i) += step;
          d.col(j) -= step;
        }
      }
      accumulate(ia, d);
      break;
    }
  }
}

}  // namespace confae::ad

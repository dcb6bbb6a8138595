#pragma once

#include "confae/linalg.hpp"
#include "confae/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace confae::testing {

using linalg::Matrix;
using linalg::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

/// Random orthonormal columns via Householder QR.
inline Matrix orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const Matrix a = random_matrix(rows, cols, rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Single affine layer y = W z + b.
inline nn::Mlp linear_net(const Matrix& w, const Vector& b) {
  return nn::Mlp({nn::Layer{w, b, Activation::identity()}});
}

inline nn::Mlp linear_net(const Matrix& w) { return linear_net(w, Vector::Zero(w.rows())); }

/// max |a - b| / max(max |b|, floor)
inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  const double denom = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Central finite-difference Jacobian of a vector function.
template <class F>
Matrix fd_jacobian(const F& f, const Vector& z, double h) {
  const Vector y0 = f(z);
  Matrix j(y0.size(), z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vector zp = z;
    Vector zm = z;
    zp(k) += h;
    zm(k) -= h;
    j.col(k) = (f(zp) - f(zm)) / (2.0 * h);
  }
  return j;
}

/// Smallest |pre-activation| of a rectifier layer over a forward pass, or +inf if none.
inline double kink_margin(const nn::Mlp& net, const Vector& z) {
  double margin = INFINITY;
  Vector h = z;
  for (const nn::Layer& l : net.layers()) {
    const Vector pre = l.weight * h + l.bias;
    if (l.activation.kind == ActivationKind::Relu || l.activation.kind == ActivationKind::LeakyRelu)
      margin = std::min(margin, pre.cwiseAbs().minCoeff());
    h = pre.unaryExpr([&](double v) { return l.activation.apply(v); });
  }
  return margin;
}

/// Same network with every parameter perturbed by `delta` at flat index `k`.
inline nn::Mlp perturbed(const nn::Mlp& net, std::size_t k, double delta) {
  std::vector<nn::Layer> layers = net.layers();
  for (nn::Layer& l : layers) {
    const auto w = static_cast<std::size_t>(l.weight.size());
    if (k < w) {
      l.weight.data()[k] += delta;
      return nn::Mlp(std::move(layers));
    }
    k -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (k < b) {
      l.bias(static_cast<Eigen::Index>(k)) += delta;
      return nn::Mlp(std::move(layers));
    }
    k -= b;
  }
  return nn::Mlp(std::move(layers));
}

/// Gradient flattened in the same order as `perturbed`.
inline std::vector<double> flatten(const nn::ParamGradient& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    out.insert(out.end(), g.weights[i].data(), g.weights[i].data() + g.weights[i].size());
    out.insert(out.end(), g.biases[i].data(), g.biases[i].data() + g.biases[i].size());
  }
  return out;
}

/// Central finite differences of a scalar function of the network parameters.
template <class F>
std::vector<double> fd_param_gradient(const nn::Mlp& net, const F& f, double h) {
  std::vector<double> g(net.parameter_count());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = (f(perturbed(net, k, h)) - f(perturbed(net, k, -h))) / (2.0 * h);
  return g;
}

/// max_k |a_k - b_k| / max_k |b_k|
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::abs(b[k]));
  }
  return num / std::max(den, 1e-300);
}

}  // namespace confae::testing

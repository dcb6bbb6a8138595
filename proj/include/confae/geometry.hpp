#pragma once

#include "confae/linalg.hpp"
#include "confae/smooth_map.hpp"

#include <optional>
#include <span>
#include <vector>

namespace confae::geo {

using linalg::Matrix;
using linalg::Vector;

/// R(z) = J(z)^T J(z) with a Euclidean latent metric.
template <SmoothMap F>
Matrix pullback_metric(const F& dec, const Vector& z) {
  const Matrix j = dec.jacobian(z);
  return j.transpose() * j;
}

/// c(z) = Tr R(z) / m.
template <SmoothMap F>
double conformal_factor(const F& dec, const Vector& z) {
  return linalg::trace(pullback_metric(dec, z)) / dec.input_dim();
}

struct ConditionNumbers {
  double jac = 0.0;  // kappa of J(z)
  double pbm = 0.0;  // kappa of J(z)^T J(z)
  bool finite() const;
};

ConditionNumbers condition_numbers_from_jacobian(const Matrix& jacobian);

template <SmoothMap F>
ConditionNumbers condition_numbers(const F& dec, const Vector& z) {
  return condition_numbers_from_jacobian(dec.jacobian(z));
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

struct KappaSummary {
  MeanStd jac;
  MeanStd pbm;
  std::size_t used = 0;
  std::size_t excluded = 0;  // samples with an infinite sentinel
};

/// Mean and population standard deviation, skipping non-finite samples.
KappaSummary summarize_kappa(std::span<const ConditionNumbers> samples);

// ---------------------------------------------------------------------------

struct ConformalField {
  std::vector<Vector> codes;
  std::vector<double> values;
  std::vector<double> normalized;  // min-max to [0, 1]

  /// Validates positivity and fills `normalized`.
  static ConformalField from_values(std::vector<Vector> codes, std::vector<double> values);
};

template <SmoothMap F>
ConformalField conformal_field(const F& dec, std::vector<Vector> codes) {
  std::vector<double> values;
  values.reserve(codes.size());
  for (const Vector& z : codes) values.push_back(conformal_factor(dec, z));
  return ConformalField::from_values(std::move(codes), std::move(values));
}

struct Edge {
  std::size_t to = 0;
  double weight = 0.0;
  double sq_distance = 0.0;
};

/// Symmetrized kNN graph with weights exp(-d^2 / h^2), stored as adjacency lists.
struct LatentGraph {
  int k = 0;
  double bandwidth = 0.0;
  std::vector<std::vector<Edge>> adjacency;  // sorted by neighbor index
  std::vector<double> degree;
  std::vector<Vector> codes;

  std::size_t size() const { return adjacency.size(); }
  /// W(i, j); zero when not adjacent.
  double weight(std::size_t i, std::size_t j) const;
  /// (L x)_i = sum_j w_ij (x_i - x_j), so L annihilates constants exactly.
  std::vector<double> apply_laplacian(std::span<const double> x) const;
  /// x^T L x evaluated as sum over edges i<j of w_ij (x_i - x_j)^2.
  double quadratic_form(std::span<const double> x) const;
  /// Dense W, D - W (for small graphs and tests).
  Matrix dense_laplacian() const;
};

/// `bandwidth` empty selects the median k-th neighbor distance.
LatentGraph build_graph(std::span<const Vector> codes, int k, std::optional<double> bandwidth = std::nullopt);

/// Nodes at least one bandwidth away from every face of the codes' bounding box.
std::vector<bool> interior_mask(const LatentGraph& graph);

struct CurvatureField {
  std::vector<Vector> codes;
  std::vector<double> raw;         // -(1/c) L log c with the plain graph Laplacian
  std::vector<double> calibrated;  // -(1/c) Lhat log c, Lhat = -L / scale approximating the Laplacian
  std::vector<double> normalized;  // calibrated / max |calibrated|
  std::vector<bool> interior;
  double laplacian_scale = 0.0;
};

/// Scale s with L ~ -s * Laplacian: the median over interior nodes of
/// (1/4) sum_j w_ij |z_i - z_j|^2 (all nodes if none is interior).
double laplacian_scale(const LatentGraph& graph, const std::vector<bool>& interior);

/// Scalar curvature of c * g_eucl on a 2-D latent space.
CurvatureField scalar_curvature(const ConformalField& field, const LatentGraph& graph);

/// Median of `values` over entries where `mask` is set (all entries if empty mask).
double masked_median(std::span<const double> values, const std::vector<bool>& mask);

// ---------------------------------------------------------------------------
// Closed-form curvature oracle: stereographic chart of the unit sphere.

/// c(z) = 4 / (1 + |z|^2)^2; the metric c * g_eucl has scalar curvature 2.
double stereographic_factor(const Vector& z);

/// Cartesian grid of `resolution` x `resolution` over [-radius, radius]^2, kept where |z| <= radius.
std::vector<Vector> disc_grid(int resolution, double radius);

}  // namespace confae::geo

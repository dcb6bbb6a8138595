#include "confae/geometry.hpp"

#include "confae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace confae::geo {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

MeanStd mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

bool ConditionNumbers::finite() const { return std::isfinite(jac) && std::isfinite(pbm); }

ConditionNumbers condition_numbers_from_jacobian(const Matrix& jacobian) {
  ConditionNumbers k;
  k.jac = linalg::condition_number(jacobian);
  k.pbm = linalg::condition_number(jacobian.transpose() * jacobian);
  return k;
}

KappaSummary summarize_kappa(std::span<const ConditionNumbers> samples) {
  if (samples.empty()) throw UsageError("summarize_kappa: no samples");
  std::vector<double> jac;
  std::vector<double> pbm;
  KappaSummary s;
  for (const ConditionNumbers& k : samples) {
    if (!k.finite()) {
      ++s.excluded;
      continue;
    }
    jac.push_back(k.jac);
    pbm.push_back(k.pbm);
  }
  if (jac.empty()) throw DegenerateError("summarize_kappa: every sample is rank-deficient");
  s.used = jac.size();
  s.jac = mean_std(jac);
  s.pbm = mean_std(pbm);
  return s;
}

ConformalField ConformalField::from_values(std::vector<Vector> codes, std::vector<double> values) {
  if (codes.size() != values.size()) throw ShapeError("ConformalField: codes and values differ in length");
  if (values.empty()) throw UsageError("ConformalField: empty field");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i]))
      throw DegenerateError("ConformalField: non-positive conformal factor " + std::to_string(values[i]) +
                            " at index " + std::to_string(i));
  }
  ConformalField f;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  f.normalized.reserve(values.size());
  for (double v : values) f.normalized.push_back(range > 0.0 ? (v - min) / range : 0.0);
  f.codes = std::move(codes);
  f.values = std::move(values);
  return f;
}

double LatentGraph::weight(std::size_t i, std::size_t j) const {
  const auto& row = adjacency.at(i);
  const auto it = std::lower_bound(row.begin(), row.end(), j, [](const Edge& e, std::size_t v) { return e.to < v; });
  return (it != row.end() && it->to == j) ? it->weight : 0.0;
}

std::vector<double> LatentGraph::apply_laplacian(std::span<const double> x) const {
  if (x.size() != size()) throw ShapeError("apply_laplacian: vector length differs from node count");
  std::vector<double> out(size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    double s = 0.0;
    for (const Edge& e : adjacency[i]) s += e.weight * (x[i] - x[e.to]);
    out[i] = s;
  }
  return out;
}

double LatentGraph::quadratic_form(std::span<const double> x) const {
  if (x.size() != size()) throw ShapeError("quadratic_form: vector length differs from node count");
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i)
    for (const Edge& e : adjacency[i])
      if (e.to > i) s += e.weight * (x[i] - x[e.to]) * (x[i] - x[e.to]);
  return s;
}

Matrix LatentGraph::dense_laplacian() const {
  const auto n = static_cast<Eigen::Index>(size());
  Matrix l = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    l(r, r) = degree[i];
    for (const Edge& e : adjacency[i]) l(r, static_cast<Eigen::Index>(e.to)) -= e.weight;
  }
  return l;
}

LatentGraph build_graph(std::span<const Vector> codes, int k, std::optional<double> bandwidth) {
  if (k < 1) throw UsageError("build_graph: k must be at least 1");
  const std::size_t n = codes.size();
  if (n < static_cast<std::size_t>(k) + 1)
    throw UsageError("build_graph: need at least k+1 = " + std::to_string(k + 1) + " codes, got " + std::to_string(n));
  for (const Vector& z : codes)
    if (z.size() != codes.front().size()) throw ShapeError("build_graph: codes differ in dimension");

  // k nearest neighbors of every node, ties broken by index.
  std::vector<std::vector<std::pair<double, std::size_t>>> knn(n);
  std::vector<double> kth(n);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back((codes[i] - codes[j]).squaredNorm(), j);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    knn[i].assign(cand.begin(), cand.begin() + k);
    kth[i] = std::sqrt(knn[i].back().first);
  }

  LatentGraph g;
  g.k = k;
  g.bandwidth = bandwidth.has_value() ? *bandwidth : median_of(kth);
  if (!(g.bandwidth > 0.0) || !std::isfinite(g.bandwidth))
    throw DegenerateError("build_graph: bandwidth must be positive (got " + std::to_string(g.bandwidth) + ")");
  const double inv_h2 = 1.0 / (g.bandwidth * g.bandwidth);

  // Union of directed kNN edges: W <- max(W, W^T) for distance-only weights.
  g.adjacency.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [d2, j] : knn[i]) {
      const double w = std::exp(-d2 * inv_h2);
      g.adjacency[i].push_back({j, w, d2});
      g.adjacency[j].push_back({i, w, d2});
    }
  }
  g.degree.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = g.adjacency[i];
    std::sort(row.begin(), row.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
    row.erase(std::unique(row.begin(), row.end(), [](const Edge& a, const Edge& b) { return a.to == b.to; }), row.end());
    for (const Edge& e : row) g.degree[i] += e.weight;
  }
  g.codes.assign(codes.begin(), codes.end());
  return g;
}

std::vector<bool> interior_mask(const LatentGraph& graph) {
  std::vector<bool> mask(graph.size(), false);
  if (graph.size() == 0) return mask;
  const Eigen::Index dim = graph.codes.front().size();
  Vector lo = graph.codes.front();
  Vector hi = graph.codes.front();
  for (const Vector& z : graph.codes) {
    lo = lo.cwiseMin(z);
    hi = hi.cwiseMax(z);
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    bool inside = true;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double z = graph.codes[i](d);
      if (z - lo(d) < graph.bandwidth || hi(d) - z < graph.bandwidth) inside = false;
    }
    mask[i] = inside;
  }
  return mask;
}

double laplacian_scale(const LatentGraph& graph, const std::vector<bool>& interior) {
  std::vector<double> moments;
  std::vector<double> all;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    double s = 0.0;
    for (const Edge& e : graph.adjacency[i]) s += e.weight * e.sq_distance;
    all.push_back(0.25 * s);
    if (i < interior.size() && interior[i]) moments.push_back(0.25 * s);
  }
  return median_of(moments.empty() ? all : moments);
}

CurvatureField scalar_curvature(const ConformalField& field, const LatentGraph& graph) {
  if (field.values.size() != graph.size()) throw ShapeError("scalar_curvature: field and graph differ in size");
  if (field.codes.empty()) throw UsageError("scalar_curvature: empty field");
  if (field.codes.front().size() != 2)
    throw UsageError("scalar_curvature: unsupported latent dimension " + std::to_string(field.codes.front().size()) +
                     " (only m = 2)");
  std::vector<double> log_c(field.values.size());
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    if (!(field.values[i] > 0.0)) throw DegenerateError("scalar_curvature: non-positive conformal factor at index " + std::to_string(i));
    log_c[i] = std::log(field.values[i]);
  }
  const std::vector<double> l_log_c = graph.apply_laplacian(log_c);

  CurvatureField s;
  s.codes = field.codes;
  s.interior = interior_mask(graph);
  s.laplacian_scale = laplacian_scale(graph, s.interior);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < log_c.size(); ++i) {
    s.raw.push_back(-l_log_c[i] / field.values[i]);
    // Lhat = -L / scale, so -(1/c) Lhat log c = (L log c) / (c * scale).
    s.calibrated.push_back(l_log_c[i] / (field.values[i] * s.laplacian_scale));
    max_abs = std::max(max_abs, std::abs(s.calibrated.back()));
  }
  for (double v : s.calibrated) s.normalized.push_back(max_abs > 0.0 ? v / max_abs : 0.0);
  return s;
}

double masked_median(std::span<const double> values, const std::vector<bool>& mask) {
  std::vector<double> picked;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask.empty() || (i < mask.size() && mask[i])) picked.push_back(values[i]);
  return median_of(std::move(picked));
}

double stereographic_factor(const Vector& z) {
  const double q = 1.0 + z.squaredNorm();
  return 4.0 / (q * q);
}

std::vector<Vector> disc_grid(int resolution, double radius) {
  if (resolution < 2 || !(radius > 0.0)) throw UsageError("disc_grid: need resolution >= 2 and radius > 0");
  std::vector<Vector> out;
  const double step = 2.0 * radius / (resolution - 1);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      Vector z{{-radius + step * i, -radius + step * j}};
      if (z.norm() <= radius * (1.0 + 1e-12)) out.push_back(std::move(z));
    }
  }
  return out;
}

}  // namespace confae::geo

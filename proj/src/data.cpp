#include "confae/data.hpp"

#include "confae/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace confae::data {

namespace {

// 53 random mantissa bits -> [0, 1).
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11U) * 0x1.0p-53; }

const char* kFeatureNames[] = {"x", "y", "z"};

std::string feature_name(Eigen::Index i) {
  return i < 3 ? kFeatureNames[i] : "feature " + std::to_string(i);
}

}  // namespace

Vector Normalization::apply(const Vector& x) const { return (x - mean).cwiseQuotient(stddev); }
Vector Normalization::invert(const Vector& x) const { return x.cwiseProduct(stddev) + mean; }

std::vector<Vector> Dataset::sample_list() const {
  std::vector<Vector> out;
  out.reserve(size());
  for (Eigen::Index i = 0; i < samples.cols(); ++i) out.emplace_back(samples.col(i));
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& positions) const {
  Dataset out;
  out.samples.resize(samples.rows(), static_cast<Eigen::Index>(positions.size()));
  if (true_params.size() != 0) out.true_params.resize(true_params.rows(), static_cast<Eigen::Index>(positions.size()));
  out.normalization = normalization;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto p = static_cast<Eigen::Index>(positions[k]);
    if (p >= samples.cols()) throw UsageError("Dataset::subset: position out of range");
    out.samples.col(static_cast<Eigen::Index>(k)) = samples.col(p);
    if (true_params.size() != 0) out.true_params.col(static_cast<Eigen::Index>(k)) = true_params.col(p);
    out.indices.push_back(indices.empty() ? positions[k] : indices[positions[k]]);
  }
  return out;
}

Vector SwissRollMap::operator()(const Vector& z) const {
  if (z.size() != 2) throw ShapeError("SwissRollMap: expected (xi, eta)");
  const double xi = z(0);
  return Vector{{xi * std::cos(xi), z(1), xi * std::sin(xi)}};
}

Matrix SwissRollMap::jacobian(const Vector& z) const {
  if (z.size() != 2) throw ShapeError("SwissRollMap: expected (xi, eta)");
  const double xi = z(0);
  Matrix j = Matrix::Zero(3, 2);
  j(0, 0) = std::cos(xi) - xi * std::sin(xi);
  j(1, 1) = 1.0;
  j(2, 0) = std::sin(xi) + xi * std::cos(xi);
  return j;
}

Vector SwissRollMap::jvp(const Vector& z, const Vector& v) const {
  if (v.size() != 2) throw ShapeError("SwissRollMap::jvp: tangent must have length 2");
  return jacobian(z) * v;
}

Vector SwissRollMap::vjp(const Vector& z, const Vector& u) const {
  if (u.size() != 3) throw ShapeError("SwissRollMap::vjp: cotangent must have length 3");
  return jacobian(z).transpose() * u;
}

Dataset swiss_roll(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("swiss_roll: n must be at least 1");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.samples.resize(3, static_cast<Eigen::Index>(n));
  ds.true_params.resize(2, static_cast<Eigen::Index>(n));
  ds.indices.resize(n);
  std::iota(ds.indices.begin(), ds.indices.end(), std::size_t{0});
  const SwissRollMap roll;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = kXiMin + (kXiMax - kXiMin) * unit_uniform(rng);
    const double eta = kEtaMax * unit_uniform(rng);
    const auto c = static_cast<Eigen::Index>(i);
    ds.true_params.col(c) = Vector{{xi, eta}};
    ds.samples.col(c) = roll(ds.true_params.col(c));
  }
  return ds;
}

Dataset standardize(const Dataset& ds) {
  if (ds.size() < 2) throw UsageError("standardize: need at least two samples");
  const double n = static_cast<double>(ds.size());
  Normalization norm;
  norm.mean = ds.samples.rowwise().sum() / n;
  const Matrix centered = ds.samples.colwise() - norm.mean;
  norm.stddev = (centered.array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index f = 0; f < norm.stddev.size(); ++f) {
    if (!(norm.stddev(f) > 0.0)) throw DegenerateError("standardize: feature '" + feature_name(f) + "' has zero variance");
  }
  Dataset out = ds;
  out.samples = centered.array().colwise() / norm.stddev.array();
  out.normalization = norm;
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw UsageError("split: val_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto val_count = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  return {ds.subset(train), ds.subset(val)};
}

std::string to_csv(const Dataset& ds) {
  if (ds.features() != 3) throw ShapeError("to_csv: expected 3 features");
  const bool params = ds.true_params.cols() == ds.samples.cols() && ds.true_params.rows() == 2;
  std::string out = "x,y,z,xi,eta\n";
  for (Eigen::Index i = 0; i < ds.samples.cols(); ++i) {
    out += fmt::format("{:.17g},{:.17g},{:.17g}", ds.samples(0, i), ds.samples(1, i), ds.samples(2, i));
    out += params ? fmt::format(",{:.17g},{:.17g}\n", ds.true_params(0, i), ds.true_params(1, i)) : ",nan,nan\n";
  }
  return out;
}

void write_csv(const Dataset& ds, const std::string& path) {
  const std::string text = to_csv(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z,xi,eta") throw ParseError(path + ":1: expected header 'x,y,z,xi,eta'");
  std::vector<std::array<double, 5>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 5> row{};
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= 5) throw ParseError(path + ":" + std::to_string(lineno) + ": too many columns");
      try {
        std::size_t used = 0;
        row[k] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++k;
    }
    if (k != 5) throw ParseError(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.samples.resize(3, n);
  ds.true_params.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    ds.samples.col(i) = Vector{{r[0], r[1], r[2]}};
    ds.true_params.col(i) = Vector{{r[3], r[4]}};
  }
  if (!ds.samples.allFinite()) throw ParseError(path + ": non-finite sample coordinates");
  if (!ds.true_params.allFinite()) ds.true_params.resize(0, 0);
  ds.indices.resize(rows.size());
  std::iota(ds.indices.begin(), ds.indices.end(), std::size_t{0});
  return ds;
}

}  // namespace confae::data

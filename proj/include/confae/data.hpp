#pragma once

#include "confae/linalg.hpp"

#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace confae::data {

using linalg::Matrix;
using linalg::Vector;

inline constexpr double kXiMin = 1.5 * std::numbers::pi;
inline constexpr double kXiMax = 4.5 * std::numbers::pi;
inline constexpr double kEtaMax = 21.0;

/// Per-feature affine map applied by `standardize`.
struct Normalization {
  Vector mean;
  Vector stddev;

  Vector apply(const Vector& x) const;
  Vector invert(const Vector& x) const;
};

struct Dataset {
  Matrix samples;      // features x n, one column per sample
  Matrix true_params;  // 2 x n ground-truth (xi, eta); may be empty
  std::optional<Normalization> normalization;
  std::vector<std::size_t> indices;  // positions in the source dataset

  std::size_t size() const { return static_cast<std::size_t>(samples.cols()); }
  int features() const { return static_cast<int>(samples.rows()); }
  Vector sample(std::size_t i) const { return samples.col(static_cast<Eigen::Index>(i)); }
  std::vector<Vector> sample_list() const;
  Dataset subset(const std::vector<std::size_t>& positions) const;
};

/// The scikit-learn Swiss-roll parametrization (xi cos xi, eta, xi sin xi)
/// over [3pi/2, 9pi/2] x [0, 21], as a smooth map.
struct SwissRollMap {
  int input_dim() const { return 2; }
  int output_dim() const { return 3; }
  Vector operator()(const Vector& z) const;
  Matrix jacobian(const Vector& z) const;
  Vector jvp(const Vector& z, const Vector& v) const;
  Vector vjp(const Vector& z, const Vector& u) const;
};

/// Uniform (xi, eta) samples mapped through SwissRollMap; no noise.
Dataset swiss_roll(std::size_t n, std::uint64_t seed);

/// Per-feature (x - mean) / std with the population standard deviation.
Dataset standardize(const Dataset& ds);

/// Seeded shuffle then partition into (train, validation).
std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction, std::uint64_t seed);

// CSV with header "x,y,z,xi,eta". Values use 17 significant digits, so a
// round trip is exact.
std::string to_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::string& path);
Dataset read_csv(const std::string& path);

}  // namespace confae::data

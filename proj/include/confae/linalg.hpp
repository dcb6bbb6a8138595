#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string_view>
#include <vector>

namespace confae::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInfiniteCondition = std::numeric_limits<double>::infinity();

/// Eigen- or singular values in descending order.
struct Spectrum {
  std::vector<double> values;

  double max() const { return values.front(); }
  double min() const { return values.back(); }
  double sum() const;
};

/// Throws ShapeError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& a, std::string_view what);

/// All eigenvalues of a symmetric matrix, descending.
///
/// Closed form for 2x2, cyclic Jacobi rotations otherwise. Rejects
/// non-square input and matrices whose asymmetry exceeds 1e-9 relative to
/// the largest entry.
Spectrum sym_eigvals(const Matrix& a);

/// Singular values through the eigenvalues of the smaller Gram matrix.
/// The Gram route squares the condition number; at the sizes used here
/// (at most ~10 columns, kappa well below 1e6) this costs nothing measurable.
Spectrum singular_values(const Matrix& a);

/// sigma_max / sigma_min in the L2 operator norm. Returns
/// kInfiniteCondition when sigma_min < 1e-300. Throws on the zero matrix.
double condition_number(const Matrix& a);

double trace(const Matrix& a);

}  // namespace confae::linalg

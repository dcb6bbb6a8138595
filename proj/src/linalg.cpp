#include "confae/linalg.hpp"

#include "confae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace confae::linalg {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagonalTolerance = 1e-12;
constexpr double kAsymmetryTolerance = 1e-9;
constexpr double kSigmaCutoff = 1e-300;

void require_square(const Matrix& a, std::string_view what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw ShapeError(std::string(what) + ": expected a non-empty square matrix, got " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

std::vector<double> eig_2x2(double a, double b, double d) {
  const double mean = 0.5 * (a + d);
  const double radius = std::hypot(0.5 * (a - d), b);
  const double det = a * d - b * b;
  double hi = mean + radius;
  double lo = mean - radius;
  // Recover the smaller-magnitude root from the determinant to avoid cancellation.
  if (mean >= 0.0 && hi != 0.0) {
    lo = det / hi;
  } else if (mean < 0.0 && lo != 0.0) {
    hi = det / lo;
  }
  return {hi, lo};
}

std::vector<double> jacobi(Matrix m) {
  const Eigen::Index n = m.rows();
  const double scale = m.norm();
  if (scale == 0.0) return std::vector<double>(static_cast<std::size_t>(n), 0.0);

  auto off_diagonal = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal() <= kOffDiagonalTolerance * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        m(p, q) = 0.0;
        m(q, p) = 0.0;
      }
    }
  }
  std::vector<double> values(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = m(i, i);
  return values;
}

}  // namespace

double Spectrum::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

void require_finite(const Matrix& a, std::string_view what) {
  if (!a.allFinite()) throw ShapeError(std::string(what) + ": matrix has non-finite entries");
}

Spectrum sym_eigvals(const Matrix& a) {
  require_square(a, "sym_eigvals");
  require_finite(a, "sym_eigvals");
  const double largest = a.cwiseAbs().maxCoeff();
  const double asymmetry = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asymmetry > kAsymmetryTolerance * largest) {
    throw ShapeError("sym_eigvals: matrix is not symmetric (max asymmetry " + std::to_string(asymmetry) + ")");
  }
  const Matrix sym = 0.5 * (a + a.transpose());

  std::vector<double> values;
  if (sym.rows() == 1) {
    values = {sym(0, 0)};
  } else if (sym.rows() == 2) {
    values = eig_2x2(sym(0, 0), sym(0, 1), sym(1, 1));
  } else {
    values = jacobi(sym);
  }
  std::sort(values.begin(), values.end(), std::greater<>());
  return Spectrum{std::move(values)};
}

Spectrum singular_values(const Matrix& a) {
  if (a.size() == 0) throw ShapeError("singular_values: empty matrix");
  require_finite(a, "singular_values");
  const Matrix gram = a.rows() >= a.cols() ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
  Spectrum s = sym_eigvals(gram);
  for (double& v : s.values) v = std::sqrt(std::max(v, 0.0));
  return s;
}

double condition_number(const Matrix& a) {
  if (a.size() == 0) throw ShapeError("condition_number: empty matrix");
  if (a.cwiseAbs().maxCoeff() == 0.0) throw UsageError("condition_number: zero matrix");
  const Spectrum s = singular_values(a);
  if (s.min() < kSigmaCutoff) return kInfiniteCondition;
  return s.max() / s.min();
}

double trace(const Matrix& a) {
  require_square(a, "trace");
  return a.trace();
}

}  // namespace confae::linalg

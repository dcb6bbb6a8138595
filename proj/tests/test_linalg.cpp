#include "doctest.h"

#include "confae/errors.hpp"
#include "confae/linalg.hpp"
#include "test_support.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <random>

using namespace confae;
using namespace confae::linalg;
using confae::testing::random_matrix;

namespace {

// Power iteration with Hotelling deflation on a positive-shifted matrix.
std::vector<double> power_iteration_eigvals(Matrix a) {
  const Eigen::Index n = a.rows();
  const double shift = a.cwiseAbs().rowwise().sum().maxCoeff();  // Gershgorin bound
  a += shift * Matrix::Identity(n, n);
  std::vector<double> values;
  std::mt19937_64 rng(99);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vector v = testing::random_vector(n, rng).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 200000; ++it) {
      Vector w = a * v;
      const double next = v.dot(w);
      v = w.normalized();
      if (it > 100 && std::abs(next - lambda) < 1e-15 * std::abs(next)) {
        lambda = next;
        break;
      }
      lambda = next;
    }
    values.push_back(lambda - shift);
    a -= lambda * v * v.transpose();
  }
  std::sort(values.begin(), values.end(), std::greater<>());
  return values;
}

Matrix random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  const Matrix b = random_matrix(n, n, rng);
  return 0.5 * (b + b.transpose());
}

}  // namespace

TEST_CASE("sym_eigvals: fixed cases") {
  const Spectrum id = sym_eigvals(Matrix::Identity(2, 2));
  CHECK(id.values == std::vector<double>{1.0, 1.0});

  // Swiss-roll pullback metric at xi = 1
  Matrix r(2, 2);
  r << 2.0, 0.0, 0.0, 1.0;
  const Spectrum s = sym_eigvals(r);
  CHECK(s.values[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s.values[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sym_eigvals: agrees with power-iteration and library oracles") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_symmetric(5, rng);
    const Spectrum s = sym_eigvals(a);
    const std::vector<double> oracle = power_iteration_eigvals(a);
    Eigen::SelfAdjointEigenSolver<Matrix> lib(a);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(s.values[i] - oracle[i]) < 1e-8);
      CHECK(std::abs(s.values[i] - lib.eigenvalues()(4 - static_cast<Eigen::Index>(i))) < 1e-10);
    }
  }
}

TEST_CASE("sym_eigvals: larger matrices and 2x2 closed form") {
  std::mt19937_64 rng(11);
  for (Eigen::Index n : {2, 3, 7, 10}) {
    const Matrix a = random_symmetric(n, rng);
    const Spectrum s = sym_eigvals(a);
    Eigen::SelfAdjointEigenSolver<Matrix> lib(a);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(s.values[static_cast<std::size_t>(i)] - lib.eigenvalues()(n - 1 - i)) < 1e-10);
    CHECK(std::is_sorted(s.values.begin(), s.values.end(), std::greater<>()));
  }
}

TEST_CASE("sym_eigvals: rejects bad shapes") {
  CHECK_THROWS_AS(sym_eigvals(Matrix::Zero(2, 3)), ShapeError);
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(sym_eigvals(asym), ShapeError);
  Matrix nan = Matrix::Identity(2, 2);
  nan(0, 0) = NAN;
  CHECK_THROWS_AS(sym_eigvals(nan), ShapeError);
}

TEST_CASE("sym_eigvals: PSD spectra are nonnegative and sum to the trace") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix j = random_matrix(6, 4, rng);
    const Matrix r = j.transpose() * j;
    const Spectrum s = sym_eigvals(r);
    CHECK(s.min() >= -1e-10);
    CHECK(std::abs(s.sum() - trace(r)) <= 1e-9 * std::abs(trace(r)));
    double sq = 0.0;
    for (double v : s.values) sq += v * v;
    CHECK(std::abs(sq - trace(r * r)) <= 1e-9 * trace(r * r));
  }
}

TEST_CASE("condition_number") {
  CHECK(condition_number(Matrix::Identity(4, 4)) == doctest::Approx(1.0));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  CHECK(condition_number(d) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(condition_number(Matrix::Zero(3, 3)), UsageError);

  Matrix singular = Matrix::Zero(2, 2);
  singular(0, 0) = 1.0;
  CHECK(condition_number(singular) == kInfiniteCondition);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(3, 2, rng);
    Eigen::JacobiSVD<Matrix> svd(a);
    const double oracle = svd.singularValues()(0) / svd.singularValues()(1);
    const Spectrum s = singular_values(a);
    CHECK(std::abs(s.values[0] - svd.singularValues()(0)) < 1e-8);
    CHECK(std::abs(s.values[1] - svd.singularValues()(1)) < 1e-8);
    CHECK(testing::rel_err(condition_number(a), oracle) < 1e-8);
  }
}

TEST_CASE("condition_number: Gram squares it and scaling leaves it unchanged") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(5, 3, rng);
    const double k = condition_number(a);
    CHECK(testing::rel_err(condition_number(a.transpose() * a), k * k) < 1e-6);
    CHECK(testing::rel_err(condition_number(-3.7 * a), k) < 1e-10);
    CHECK(testing::rel_err(condition_number(1e-5 * a), k) < 1e-10);
  }
}

TEST_CASE("condition_number: wide matrices use the smaller Gram") {
  Matrix w(2, 3);
  w << 2, 0, 0, 0, 1, 0;
  CHECK(condition_number(w) == doctest::Approx(2.0));
}

TEST_CASE("trace") {
  CHECK(trace(Matrix::Identity(4, 4)) == 4.0);
  Matrix r(2, 2);
  r << 2, 0, 0, 1;
  CHECK(trace(r) == 3.0);
  CHECK_THROWS_AS(trace(Matrix::Zero(2, 3)), ShapeError);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(3, 3, rng);
    const Matrix b = random_matrix(3, 3, rng);
    CHECK(std::abs(trace(a * b) - trace(b * a)) < 1e-12);
  }
}

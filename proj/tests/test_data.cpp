#include "doctest.h"

#include "confae/data.hpp"
#include "confae/errors.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace confae;
using namespace confae::data;
using namespace confae::testing;

namespace {

// Kolmogorov-Smirnov distance between a sample and U(lo, hi).
double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = (v[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

Dataset from_columns(const Matrix& m) {
  Dataset ds;
  ds.samples = m;
  return ds;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("confae_test_" + name);
}

}  // namespace

TEST_CASE("Swiss-roll parametrization at exact trig points") {
  const SwissRollMap roll;
  const double pi = std::numbers::pi;
  const Vector a = roll(Vector{{1.5 * pi, 0.0}});
  CHECK(std::abs(a(0)) < 1e-12);
  CHECK(a(1) == 0.0);
  CHECK(std::abs(a(2) + 1.5 * pi) < 1e-12);
  const Vector b = roll(Vector{{2 * pi, 21.0}});
  CHECK(std::abs(b(0) - 2 * pi) < 1e-12);
  CHECK(b(1) == 21.0);
  CHECK(std::abs(b(2)) < 1e-12);
}

TEST_CASE("Swiss-roll Jacobian by finite differences gives diag(1 + xi^2, 1)") {
  const SwissRollMap roll;
  const Dataset ds = swiss_roll(50, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vector p = ds.true_params.col(static_cast<Eigen::Index>(i));
    const Matrix j = fd_jacobian([&](const Vector& q) { return roll(q); }, p, 1e-5);
    const Matrix r = j.transpose() * j;
    const double xi = p(0);
    CHECK(std::abs(r(0, 0) - (1 + xi * xi)) < 1e-6 * (1 + xi * xi));
    CHECK(std::abs(r(1, 1) - 1.0) < 1e-6);
    CHECK(std::abs(r(0, 1)) < 1e-6);
    CHECK(rel_err(roll.jacobian(p), j) < 1e-8);
  }
}

TEST_CASE("swiss_roll: domain, radius identity, determinism and uniformity") {
  const Dataset ds = swiss_roll(5000, 11);
  CHECK(ds.size() == 5000);
  CHECK(ds.features() == 3);
  std::vector<double> xi;
  std::vector<double> eta;
  for (Eigen::Index i = 0; i < 5000; ++i) {
    const double x = ds.true_params(0, i);
    const double e = ds.true_params(1, i);
    CHECK(x >= kXiMin);
    CHECK(x <= kXiMax);
    CHECK(e >= 0.0);
    CHECK(e <= kEtaMax);
    const double r2 = ds.samples(0, i) * ds.samples(0, i) + ds.samples(2, i) * ds.samples(2, i);
    CHECK(std::abs(r2 - x * x) < 1e-10 * x * x);
    CHECK(ds.samples(1, i) == e);
    xi.push_back(x);
    eta.push_back(e);
  }
  CHECK(ks_uniform(xi, kXiMin, kXiMax) < 0.05);
  CHECK(ks_uniform(eta, 0.0, kEtaMax) < 0.05);
  CHECK(swiss_roll(100, 11).samples == swiss_roll(100, 11).samples);
  CHECK_FALSE(swiss_roll(100, 11).samples == swiss_roll(100, 12).samples);
  CHECK_THROWS_AS(swiss_roll(0, 1), UsageError);
}

TEST_CASE("standardize examples") {
  Matrix two(3, 2);
  two << 0, 2, 0, 2, 0, 2;
  const Dataset s = standardize(from_columns(two));
  Matrix expected(3, 2);
  expected << -1, 1, -1, 1, -1, 1;
  CHECK(s.samples == expected);
  REQUIRE(s.normalization.has_value());
  CHECK(s.normalization->mean == Vector::Ones(3));

  Matrix flat(3, 2);
  flat << 0, 2, 5, 5, 0, 1;
  CHECK_THROWS_WITH_AS(standardize(from_columns(flat)), doctest::Contains("'y'"), DegenerateError);
  CHECK_THROWS_AS(standardize(from_columns(Matrix::Ones(3, 1))), UsageError);
}

TEST_CASE("standardize: moments, idempotence and round trip") {
  const Dataset raw = swiss_roll(2000, 5);
  const Dataset s = standardize(raw);
  const Vector mean = s.samples.rowwise().mean();
  const Vector var = (s.samples.colwise() - mean).array().square().rowwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((var.array().sqrt() - 1.0).abs().maxCoeff() < 1e-9);

  CHECK(rel_err(standardize(s).samples, s.samples) < 1e-12);
  for (std::size_t i = 0; i < raw.size(); i += 97)
    CHECK(rel_err(s.normalization->invert(s.sample(i)), raw.sample(i)) < 1e-12);
  CHECK(rel_err(s.normalization->apply(raw.sample(3)), s.sample(3)) < 1e-12);
}

TEST_CASE("split: sizes, determinism, disjoint and exhaustive") {
  const Dataset ds = swiss_roll(10, 1);
  const auto [train, val] = split(ds, 0.2, 9);
  CHECK(train.size() == 8);
  CHECK(val.size() == 2);
  const auto [train2, val2] = split(ds, 0.2, 9);
  CHECK(train.indices == train2.indices);
  CHECK(val.indices == val2.indices);

  const Dataset big = swiss_roll(1000, 1);
  const auto [t, v] = split(big, 0.2, 4);
  std::set<std::size_t> all(t.indices.begin(), t.indices.end());
  for (std::size_t i : v.indices) CHECK(all.insert(i).second);
  CHECK(all.size() == 1000);
  for (std::size_t k = 0; k < v.size(); k += 13) CHECK(v.sample(k) == big.sample(v.indices[k]));

  CHECK_THROWS_AS(split(ds, 0.0, 1), UsageError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), UsageError);
}

TEST_CASE("CSV round trip is exact") {
  const Dataset ds = swiss_roll(64, 8);
  const auto path = temp_file("roundtrip.csv");
  write_csv(ds, path.string());
  const Dataset back = read_csv(path.string());
  CHECK(back.samples == ds.samples);
  CHECK(back.true_params == ds.true_params);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,y,z,xi,eta");
  std::filesystem::remove(path);
}

TEST_CASE("CSV parse errors carry line numbers") {
  const auto path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "x,y,z,xi,eta\n1,2,3,4,5\n1,2,oops,4,5\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path.string()), doctest::Contains(":3:"), ParseError);
  {
    std::ofstream out(path);
    out << "a,b,c\n1,2,3\n";
  }
  CHECK_THROWS_AS(read_csv(path.string()), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_csv(path.string()), IoError);
}

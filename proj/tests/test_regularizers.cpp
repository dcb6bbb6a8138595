#include "doctest.h"

#include "confae/data.hpp"
#include "confae/errors.hpp"
#include "confae/regularizers.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

using namespace confae;
using namespace confae::reg;
using namespace confae::testing;

namespace {

// Linear map whose Jacobian is sqrt(s(z)) * Q with orthonormal Q, so R(z) = s(z) I.
// The scale depends on the point only through the first coordinate's sign,
// enough to give a batch whose points have different conformal factors.
struct PiecewiseConformal {
  Matrix q;
  double left = 1.0;
  double right = 4.0;

  double gain(const Vector& z) const { return std::sqrt(z(0) < 0.0 ? left : right); }
  int input_dim() const { return static_cast<int>(q.cols()); }
  int output_dim() const { return static_cast<int>(q.rows()); }
  Vector operator()(const Vector& z) const { return gain(z) * q * z; }
  Matrix jacobian(const Vector& z) const { return gain(z) * q; }
  Vector jvp(const Vector& z, const Vector& v) const { return gain(z) * q * v; }
  Vector vjp(const Vector& z, const Vector& u) const { return gain(z) * q.transpose() * u; }
};

static_assert(SmoothMap<PiecewiseConformal>);
static_assert(SmoothMap<nn::Mlp>);
static_assert(SmoothMap<data::SwissRollMap>);

nn::Mlp seeded_decoder(std::uint64_t seed, Activation act = Activation::tanh(), std::vector<int> dims = {2, 12, 12, 3}) {
  std::vector<Activation> acts(dims.size() - 1, act);
  acts.back() = Activation::identity();
  nn::Mlp net = nn::init(dims, acts, seed);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  for (std::size_t i = 0; i < net.depth(); ++i) net.mutable_layer(i).bias = random_vector(net.layer(i).bias.size(), rng, 0.2);
  return net;
}

std::vector<Vector> random_codes(int n, int m, std::mt19937_64& rng) {
  std::vector<Vector> out;
  for (int i = 0; i < n; ++i) out.push_back(random_vector(m, rng));
  return out;
}

nn::Mlp scaled_output(nn::Mlp net, double alpha) {
  nn::Layer& last = net.mutable_layer(net.depth() - 1);
  last.weight *= alpha;
  last.bias *= alpha;
  return net;
}

double exact_trace_r(const nn::Mlp& net, const Vector& z) {
  const Matrix j = nn::jacobian(net, z);
  return (j.transpose() * j).trace();
}

// Tape evaluation of a trace-based loss, returning the value and the gradient.
struct TapeLoss {
  double value;
  std::vector<double> gradient;
};

TapeLoss tape_loss(Regularizer r, const nn::Mlp& dec, const std::vector<Vector>& codes, const std::vector<ProbeSet>& probes) {
  ad::Tape tape;
  const nn::BoundMlp b = nn::bind(tape, dec);
  Matrix z(dec.input_dim(), static_cast<Eigen::Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) z.col(static_cast<Eigen::Index>(i)) = codes[i];
  const nn::PrimalRecord p = nn::record_forward(tape, b, tape.constant(z));
  ad::NodeId loss;
  if (r == Regularizer::GlobalIsometric) {
    loss = record_global_iso(tape, tape.constant(z), p.output);
  } else {
    const TraceNodes t = record_traces(tape, b, p, probes);
    switch (r) {
      case Regularizer::Conformal: loss = record_nonlinear_conformal(tape, t, dec.input_dim()); break;
      case Regularizer::LocalIsometric: loss = record_local_iso(tape, t, dec.input_dim()); break;
      default: loss = record_constant_conformal(tape, t, dec.input_dim()); break;
    }
  }
  return {tape.scalar(loss), flatten(nn::grad_scalar(tape, loss, b))};
}

double value_loss(Regularizer r, const nn::Mlp& dec, const std::vector<Vector>& codes, const std::vector<ProbeSet>& probes) {
  switch (r) {
    case Regularizer::Conformal: return nonlinear_conformal_loss(dec, codes, probes);
    case Regularizer::LocalIsometric: return local_iso_loss(dec, codes, probes);
    case Regularizer::ConstantConformal: return constant_conformal_loss(dec, codes, probes);
    case Regularizer::GlobalIsometric: return global_iso_loss(dec, codes);
    case Regularizer::None: break;
  }
  return 0.0;
}

}  // namespace

TEST_CASE("regularizer tags round trip") {
  for (Regularizer r : {Regularizer::None, Regularizer::GlobalIsometric, Regularizer::LocalIsometric,
                        Regularizer::Conformal, Regularizer::ConstantConformal})
    CHECK(parse_regularizer(to_string(r)) == r);
  CHECK_THROWS_AS(parse_regularizer("isometric"), ConfigError);
}

TEST_CASE("Rademacher probes are +-1, seeded and balanced") {
  const ProbeSet a = rademacher_probes(5, 400, 11);
  const ProbeSet b = rademacher_probes(5, 400, 11);
  CHECK(a.vectors == b.vectors);
  CHECK(a.seed == 11);
  CHECK(a.weight == doctest::Approx(1.0 / 400));
  CHECK_FALSE(a.vectors == rademacher_probes(5, 400, 12).vectors);
  CHECK((a.vectors.array().abs() == 1.0).all());
  CHECK(std::abs(a.vectors.mean()) < 0.1);
  CHECK_THROWS_AS(rademacher_probes(0, 3, 1), UsageError);
}

TEST_CASE("recon_loss examples") {
  const nn::Mlp id = linear_net(Matrix::Identity(3, 3));
  std::vector<Vector> batch{Vector::Unit(3, 0), Vector::Unit(3, 1), Vector::Unit(3, 2)};
  CHECK(recon_loss(id, id, batch) == 0.0);

  const nn::Mlp zero = linear_net(Matrix::Zero(3, 3));
  CHECK(recon_loss(id, zero, batch) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(recon_loss(id, id, std::vector<Vector>{}), UsageError);

  std::mt19937_64 rng(4);
  const nn::Mlp enc = seeded_decoder(1, Activation::relu(), {3, 8, 2});
  const nn::Mlp dec = seeded_decoder(2, Activation::tanh(), {2, 8, 3});
  const std::vector<Vector> xs = random_codes(4, 3, rng);
  double hand = 0.0;
  for (const Vector& x : xs) {
    // explicit layer-by-layer composition
    Vector h = x;
    for (const nn::Layer& l : enc.layers()) h = (l.weight * h + l.bias).unaryExpr([&](double v) { return l.activation.apply(v); });
    for (const nn::Layer& l : dec.layers()) h = (l.weight * h + l.bias).unaryExpr([&](double v) { return l.activation.apply(v); });
    hand += (x - h).squaredNorm();
  }
  CHECK(std::abs(recon_loss(enc, dec, xs) - hand / 4.0) < 1e-12);
}

TEST_CASE("global_iso_loss examples") {
  const std::vector<Vector> pair{Vector{{0.0, 0.0}}, Vector{{1.0, 0.0}}};
  CHECK(global_iso_loss(linear_net(Matrix::Identity(2, 2)), pair) == 0.0);
  CHECK(global_iso_loss(linear_net(2.0 * Matrix::Identity(2, 2)), pair) == doctest::Approx(1.0));
  CHECK_THROWS_AS(global_iso_loss(linear_net(Matrix::Identity(2, 2)), std::vector<Vector>{pair[0]}), UsageError);

  std::mt19937_64 rng(5);
  const nn::Mlp dec = seeded_decoder(3);
  const std::vector<Vector> z = random_codes(3, 2, rng);
  auto term = [&](int a, int b) {
    return std::abs((z[a] - z[b]).norm() - (nn::forward(dec, z[a]) - nn::forward(dec, z[b])).norm());
  };
  const double enumerated = (term(0, 1) + term(0, 2) + term(1, 2)) / 3.0;
  CHECK(std::abs(global_iso_loss(dec, z) - enumerated) < 1e-12);
}

TEST_CASE("Hutchinson: diagonal J^T J is estimated exactly by every probe") {
  Matrix j = Matrix::Zero(3, 2);
  j(0, 0) = std::sqrt(3.0);
  j(1, 1) = 1.0;
  const nn::Mlp dec = linear_net(j);
  const Vector z{{0.2, 0.4}};
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const ProbeSet p = rademacher_probes(2, 1, seed);
    CHECK(hutch_tr_R(dec, z, p) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(hutch_tr_R2(dec, z, p) == doctest::Approx(10.0).epsilon(1e-14));
  }

  const data::SwissRollMap roll;
  const Vector at_one{{1.0, 7.0}};
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const ProbeSet p = rademacher_probes(2, 3, seed);
    CHECK(hutch_tr_R(roll, at_one, p) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(hutch_tr_R2(roll, at_one, p) == doctest::Approx(5.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(hutch_tr_R(dec, z, ProbeSet{Matrix(2, 0), 1.0, 0}), UsageError);
  CHECK_THROWS_AS(hutch_tr_R(dec, z, rademacher_probes(3, 2, 1)), ShapeError);
}

TEST_CASE("Hutchinson: many probes approach the full-Jacobian traces") {
  const nn::Mlp dec = seeded_decoder(21);
  const Vector z{{0.3, -0.4}};
  const Matrix j = nn::jacobian(dec, z);
  const Matrix r = j.transpose() * j;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
  const ProbeSet p = rademacher_probes(2, 4096, 77);
  CHECK(rel_err(hutch_tr_R(dec, z, p), r.trace()) < 0.02);
  CHECK(rel_err(hutch_tr_R2(dec, z, p), eig.eigenvalues().squaredNorm()) < 0.03);
  // basis probes reproduce both traces
  CHECK(rel_err(hutch_tr_R(dec, z, basis_probes(2)), r.trace()) < 1e-12);
  CHECK(rel_err(hutch_tr_R2(dec, z, basis_probes(2)), (r * r).trace()) < 1e-12);
}

TEST_CASE("Hutchinson: unbiased and variance shrinks with probe count") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix j = random_matrix(12, 10, rng);
    const nn::Mlp dec = linear_net(j);
    const Vector z = Vector::Zero(10);
    const double truth = (j.transpose() * j).trace();
    std::vector<double> est;
    for (int rep = 0; rep < 200; ++rep) est.push_back(hutch_tr_R(dec, z, rademacher_probes(10, 64, rng)));
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / 200.0;
    double var = 0.0;
    for (double e : est) var += (e - mean) * (e - mean);
    var /= 199.0;
    CHECK(std::abs(mean - truth) < 3.0 * std::sqrt(var / 200.0));
  }

  const int counts[] = {1, 4, 16, 64, 256};
  std::vector<std::vector<double>> variances(5);
  for (int trial = 0; trial < 9; ++trial) {
    const nn::Mlp dec = linear_net(random_matrix(12, 10, rng));
    for (int c = 0; c < 5; ++c) {
      std::vector<double> est;
      for (int rep = 0; rep < 50; ++rep) est.push_back(hutch_tr_R(dec, Vector::Zero(10), rademacher_probes(10, counts[c], rng)));
      const double mean = std::accumulate(est.begin(), est.end(), 0.0) / 50.0;
      double var = 0.0;
      for (double e : est) var += (e - mean) * (e - mean);
      variances[c].push_back(var / 49.0);
    }
  }
  double prev = INFINITY;
  for (auto& v : variances) {
    std::nth_element(v.begin(), v.begin() + 4, v.end());
    CHECK(v[4] < prev);
    prev = v[4];
  }
}

TEST_CASE("conformal loss: zero on linear conformal decoders, 1/18 at eigenvalues (2,1)") {
  std::mt19937_64 rng(41);
  const std::vector<Vector> codes = random_codes(6, 2, rng);
  for (double alpha : {0.3, 1.0, 2.5}) {
    const nn::Mlp dec = linear_net(alpha * orthonormal_columns(5, 2, rng));
    CHECK(std::abs(nonlinear_conformal_loss_exact(dec, codes)) < 1e-10);
    CHECK(std::abs(nonlinear_conformal_loss(dec, codes, draw_probes(2, 6, 8, rng))) < 1e-10);
  }

  const data::SwissRollMap roll;
  const std::vector<Vector> at_one{Vector{{1.0, 2.0}}};
  CHECK(nonlinear_conformal_loss_exact(roll, at_one) == doctest::Approx(1.0 / 18.0).epsilon(1e-12));
  CHECK(nonlinear_conformal_loss(roll, at_one, draw_probes(2, 1, 4, rng)) == doctest::Approx(1.0 / 18.0).epsilon(1e-12));
}

TEST_CASE("conformal loss is invariant under output scaling") {
  std::mt19937_64 rng(42);
  const nn::Mlp dec = seeded_decoder(7);
  const std::vector<Vector> codes = random_codes(8, 2, rng);
  const double base = nonlinear_conformal_loss_exact(dec, codes);
  CHECK(base > 1e-3);
  CHECK(std::abs(nonlinear_conformal_loss_exact(scaled_output(dec, 3.0), codes) - base) < 1e-10);
  const std::vector<ProbeSet> probes = draw_probes(2, 8, 8, rng);
  CHECK(std::abs(nonlinear_conformal_loss(scaled_output(dec, 3.0), codes, probes) -
                 nonlinear_conformal_loss(dec, codes, probes)) < 1e-10);
}

TEST_CASE("conformal loss: uniform spectra characterize the zero set") {
  std::mt19937_64 rng(43);
  const Matrix q = orthonormal_columns(4, 2, rng);
  for (double spread : {0.0, 1e-3, 0.1, 1.0}) {
    Matrix j = q;
    j.col(1) *= std::sqrt(1.0 + spread);
    const double loss = nonlinear_conformal_loss_exact(linear_net(j), random_codes(3, 2, rng));
    if (spread == 0.0)
      CHECK(loss < 1e-10);
    else
      CHECK(loss > 1e-10);
  }
  // R1 = c R2 with constant c gives equal losses
  const Matrix a = random_matrix(4, 2, rng);
  const std::vector<Vector> codes = random_codes(3, 2, rng);
  CHECK(std::abs(nonlinear_conformal_loss_exact(linear_net(a), codes) -
                 nonlinear_conformal_loss_exact(linear_net(std::sqrt(7.0) * a), codes)) < 1e-10);
}

TEST_CASE("exact-path losses are non-negative on arbitrary decoders") {
  std::mt19937_64 rng(44);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const nn::Mlp dec = seeded_decoder(seed, seed % 2 ? Activation::relu() : Activation::tanh());
    const std::vector<Vector> codes = random_codes(5, 2, rng);
    CHECK(nonlinear_conformal_loss_exact(dec, codes) >= -1e-9);
    CHECK(local_iso_loss_exact(dec, codes) >= -1e-9);
    CHECK(constant_conformal_loss_exact(dec, codes) >= -1e-9);
  }
}

TEST_CASE("local isometric loss examples") {
  std::mt19937_64 rng(45);
  const std::vector<Vector> codes = random_codes(4, 2, rng);
  const Matrix q = orthonormal_columns(3, 2, rng);
  CHECK(std::abs(local_iso_loss_exact(linear_net(q), codes)) < 1e-12);
  CHECK(local_iso_loss_exact(linear_net(std::sqrt(2.0) * q), codes) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(local_iso_loss(linear_net(std::sqrt(2.0) * q), codes, draw_probes(2, 4, 8, rng)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  const data::SwissRollMap roll;
  CHECK(local_iso_loss_exact(roll, std::vector<Vector>{Vector{{1.0, 0.0}}}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(local_iso_loss(roll, std::vector<Vector>{}, std::vector<ProbeSet>{}), UsageError);
}

TEST_CASE("constant conformal loss separates pointwise from global conformality") {
  std::mt19937_64 rng(46);
  const PiecewiseConformal map{orthonormal_columns(3, 2, rng)};
  const std::vector<Vector> pair{Vector{{-1.0, 0.5}}, Vector{{1.0, 0.5}}};
  CHECK(constant_conformal_loss_exact(map, pair) == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(std::abs(nonlinear_conformal_loss_exact(map, pair)) < 1e-12);
  const std::vector<ProbeSet> probes = draw_probes(2, 2, 8, rng);
  CHECK(constant_conformal_loss(map, pair, probes) == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(std::abs(nonlinear_conformal_loss(map, pair, probes)) < 1e-12);

  const PiecewiseConformal flat{map.q, 1.0, 1.0};
  CHECK(std::abs(constant_conformal_loss_exact(flat, pair)) < 1e-12);

  const nn::Mlp dec = seeded_decoder(8);
  const std::vector<Vector> codes = random_codes(6, 2, rng);
  CHECK(std::abs(constant_conformal_loss_exact(scaled_output(dec, 5.0), codes) -
                 constant_conformal_loss_exact(dec, codes)) < 1e-10);
}

TEST_CASE("collapsed decoder raises a degenerate-Jacobian error") {
  const nn::Mlp dead = linear_net(Matrix::Zero(3, 2));
  const std::vector<Vector> codes{Vector{{0.0, 1.0}}, Vector{{1.0, 0.0}}};
  std::mt19937_64 rng(1);
  const std::vector<ProbeSet> probes = draw_probes(2, 2, 4, rng);
  CHECK_THROWS_AS(nonlinear_conformal_loss(dead, codes, probes), DegenerateError);
  CHECK_THROWS_WITH_AS(nonlinear_conformal_loss(dead, codes, probes), doctest::Contains("code index 0"), DegenerateError);
  CHECK_THROWS_AS(constant_conformal_loss(dead, codes, probes), DegenerateError);
  CHECK_THROWS_AS(tape_loss(Regularizer::Conformal, dead, codes, probes), DegenerateError);
}

TEST_CASE("tape recordings agree with value-level losses") {
  std::mt19937_64 rng(47);
  const nn::Mlp dec = seeded_decoder(9);
  const std::vector<Vector> codes = random_codes(7, 2, rng);
  const std::vector<ProbeSet> probes = draw_probes(2, 7, 8, rng);
  for (Regularizer r : {Regularizer::Conformal, Regularizer::LocalIsometric, Regularizer::ConstantConformal,
                        Regularizer::GlobalIsometric}) {
    CAPTURE(to_string(r));
    const double tape_value = tape_loss(r, dec, codes, probes).value;
    CHECK(rel_err(tape_value, value_loss(r, dec, codes, probes)) < 1e-12);
  }
  const std::vector<ProbeSet> exact = exact_probes(2, 7);
  CHECK(rel_err(tape_loss(Regularizer::Conformal, dec, codes, exact).value, nonlinear_conformal_loss_exact(dec, codes)) < 1e-12);
  CHECK(rel_err(tape_loss(Regularizer::LocalIsometric, dec, codes, exact).value, local_iso_loss_exact(dec, codes)) < 1e-12);
  CHECK(rel_err(tape_loss(Regularizer::ConstantConformal, dec, codes, exact).value,
                constant_conformal_loss_exact(dec, codes)) < 1e-12);
}

TEST_CASE("loss gradients with frozen probes match finite differences") {
  std::mt19937_64 rng(48);
  for (Activation act : {Activation::tanh(), Activation::relu()}) {
    const nn::Mlp dec = seeded_decoder(10, act, {2, 6, 6, 3});
    const std::vector<Vector> codes = random_codes(4, 2, rng);
    const std::vector<ProbeSet> probes = draw_probes(2, 4, 4, rng);
    for (Regularizer r : {Regularizer::Conformal, Regularizer::LocalIsometric, Regularizer::ConstantConformal,
                          Regularizer::GlobalIsometric}) {
      CAPTURE(to_string(r));
      const std::vector<double> g = tape_loss(r, dec, codes, probes).gradient;
      const std::vector<double> fd =
          fd_param_gradient(dec, [&](const nn::Mlp& n) { return value_loss(r, n, codes, probes); }, 1e-6);
      CHECK(rel_err(g, fd) < 1e-3);
    }
  }
}

TEST_CASE("LossBreakdown total is consistent") {
  const LossBreakdown b = LossBreakdown::compose(0.25, 0.5, 3.0);
  CHECK(b.total == 0.25 + 3.0 * 0.5);
  CHECK(LossBreakdown::compose(1.0, 2.0, 0.0).total == 1.0);
}

TEST_CASE("exact trace helper agrees with the Jacobian") {
  const nn::Mlp dec = seeded_decoder(12);
  const Vector z{{0.1, 0.9}};
  CHECK(rel_err(exact_traces(dec, z).tr_r, exact_trace_r(dec, z)) < 1e-14);
}

#pragma once

#include "confae/errors.hpp"
#include "confae/linalg.hpp"
#include "confae/mlp.hpp"
#include "confae/smooth_map.hpp"
#include "confae/tape.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace confae::reg {

using linalg::Matrix;
using linalg::Vector;

enum class Regularizer { None, GlobalIsometric, LocalIsometric, Conformal, ConstantConformal };

std::string to_string(Regularizer r);  // none | globiso | lociso | conf | constconf
Regularizer parse_regularizer(std::string_view tag);

/// Probe directions for trace estimation at one latent point.
///
/// Tr R is estimated as weight * sum_k ||J v_k||^2. Rademacher sets use
/// weight 1/N (Hutchinson); the basis set uses e_1..e_m with weight 1 and
/// reproduces the traces exactly.
struct ProbeSet {
  Matrix vectors;  // dim x count
  double weight = 1.0;
  std::uint64_t seed = 0;

  int dim() const { return static_cast<int>(vectors.rows()); }
  int count() const { return static_cast<int>(vectors.cols()); }
};

ProbeSet rademacher_probes(int dim, int count, std::uint64_t seed);
ProbeSet rademacher_probes(int dim, int count, std::mt19937_64& rng);
ProbeSet basis_probes(int dim);

/// One probe set per point, drawn sequentially from `rng`.
std::vector<ProbeSet> draw_probes(int dim, int points, int count, std::mt19937_64& rng);
std::vector<ProbeSet> exact_probes(int dim, int points);

struct LossBreakdown {
  double recon = 0.0;
  double geometric = 0.0;
  double intensity = 0.0;
  double total = 0.0;

  static LossBreakdown compose(double recon, double geometric, double intensity) {
    return {recon, geometric, intensity, recon + intensity * geometric};
  }
};

// ---------------------------------------------------------------------------
// Per-point formulas from exact or estimated traces of R.

/// (m/2) Tr R^2 / (Tr R)^2 - 1/2. Zero iff R is a multiple of the identity.
inline double conformal_term(double tr_r, double tr_r2, int m) {
  return 0.5 * m * tr_r2 / (tr_r * tr_r) - 0.5;
}

/// (1/2m) Tr R^2 - (1/m) Tr R + 1/2.
inline double local_isometric_term(double tr_r, double tr_r2, int m) {
  return tr_r2 / (2.0 * m) - tr_r / m + 0.5;
}

// ---------------------------------------------------------------------------
// Value-level estimators over any smooth map.

template <SmoothMap F>
double hutch_tr_R(const F& dec, const Vector& z, const ProbeSet& probes) {
  if (probes.count() == 0) throw UsageError("hutch_tr_R: empty probe set");
  if (probes.dim() != dec.input_dim()) throw ShapeError("hutch_tr_R: probe dim differs from latent dim");
  double s = 0.0;
  for (int k = 0; k < probes.count(); ++k) s += dec.jvp(z, probes.vectors.col(k)).squaredNorm();
  return probes.weight * s;
}

template <SmoothMap F>
double hutch_tr_R2(const F& dec, const Vector& z, const ProbeSet& probes) {
  if (probes.count() == 0) throw UsageError("hutch_tr_R2: empty probe set");
  if (probes.dim() != dec.input_dim()) throw ShapeError("hutch_tr_R2: probe dim differs from latent dim");
  double s = 0.0;
  for (int k = 0; k < probes.count(); ++k) {
    const Vector jv = dec.jvp(z, probes.vectors.col(k));
    s += dec.vjp(z, jv).squaredNorm();
  }
  return probes.weight * s;
}

namespace detail {

inline void require_batch(std::size_t codes, std::size_t probes, const char* what) {
  if (codes == 0) throw UsageError(std::string(what) + ": empty code batch");
  if (probes != codes) throw UsageError(std::string(what) + ": need one probe set per code");
}

}  // namespace detail

template <SmoothMap F>
double nonlinear_conformal_loss(const F& dec, std::span<const Vector> codes, std::span<const ProbeSet> probes) {
  detail::require_batch(codes.size(), probes.size(), "nonlinear_conformal_loss");
  const int m = dec.input_dim();
  double s = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double tr = hutch_tr_R(dec, codes[i], probes[i]);
    if (tr <= 1e-12)
      throw DegenerateError("nonlinear_conformal_loss: Tr R estimate " + std::to_string(tr) +
                            " at code index " + std::to_string(i) + " (collapsed decoder)");
    s += conformal_term(tr, hutch_tr_R2(dec, codes[i], probes[i]), m);
  }
  return s / static_cast<double>(codes.size());
}

template <SmoothMap F>
double local_iso_loss(const F& dec, std::span<const Vector> codes, std::span<const ProbeSet> probes) {
  detail::require_batch(codes.size(), probes.size(), "local_iso_loss");
  const int m = dec.input_dim();
  double s = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i)
    s += local_isometric_term(hutch_tr_R(dec, codes[i], probes[i]), hutch_tr_R2(dec, codes[i], probes[i]), m);
  return s / static_cast<double>(codes.size());
}

template <SmoothMap F>
double constant_conformal_loss(const F& dec, std::span<const Vector> codes, std::span<const ProbeSet> probes) {
  detail::require_batch(codes.size(), probes.size(), "constant_conformal_loss");
  const int m = dec.input_dim();
  double tr = 0.0;
  double tr2 = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    tr += hutch_tr_R(dec, codes[i], probes[i]);
    tr2 += hutch_tr_R2(dec, codes[i], probes[i]);
  }
  const double n = static_cast<double>(codes.size());
  tr /= n;
  tr2 /= n;
  if (tr <= 1e-12) throw DegenerateError("constant_conformal_loss: batch-mean Tr R is degenerate");
  return conformal_term(tr, tr2, m);
}

template <SmoothMap F>
double global_iso_loss(const F& dec, std::span<const Vector> codes) {
  if (codes.size() < 2) throw UsageError("global_iso_loss: need at least two codes");
  std::vector<Vector> decoded;
  decoded.reserve(codes.size());
  for (const Vector& z : codes) decoded.push_back(dec(z));
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = i + 1; j < codes.size(); ++j, ++pairs) {
      s += std::abs((codes[i] - codes[j]).norm() - (decoded[i] - decoded[j]).norm());
    }
  }
  return s / static_cast<double>(pairs);
}

/// (1/N) sum ||x_i - Dec(Enc(x_i))||^2.
double recon_loss(const nn::Mlp& enc, const nn::Mlp& dec, std::span<const Vector> batch);

// Exact traces from the full Jacobian, independent of the probe machinery.
struct ExactTraces {
  double tr_r = 0.0;
  double tr_r2 = 0.0;
};

template <SmoothMap F>
ExactTraces exact_traces(const F& dec, const Vector& z) {
  const Matrix j = dec.jacobian(z);
  const Matrix r = j.transpose() * j;
  return {linalg::trace(r), linalg::trace(r * r)};
}

template <SmoothMap F>
double nonlinear_conformal_loss_exact(const F& dec, std::span<const Vector> codes) {
  if (codes.empty()) throw UsageError("nonlinear_conformal_loss_exact: empty code batch");
  double s = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const ExactTraces t = exact_traces(dec, codes[i]);
    if (t.tr_r <= 1e-12)
      throw DegenerateError("nonlinear_conformal_loss_exact: Tr R vanishes at code index " + std::to_string(i));
    s += conformal_term(t.tr_r, t.tr_r2, dec.input_dim());
  }
  return s / static_cast<double>(codes.size());
}

template <SmoothMap F>
double local_iso_loss_exact(const F& dec, std::span<const Vector> codes) {
  if (codes.empty()) throw UsageError("local_iso_loss_exact: empty code batch");
  double s = 0.0;
  for (const Vector& z : codes) {
    const ExactTraces t = exact_traces(dec, z);
    s += local_isometric_term(t.tr_r, t.tr_r2, dec.input_dim());
  }
  return s / static_cast<double>(codes.size());
}

template <SmoothMap F>
double constant_conformal_loss_exact(const F& dec, std::span<const Vector> codes) {
  if (codes.empty()) throw UsageError("constant_conformal_loss_exact: empty code batch");
  double tr = 0.0;
  double tr2 = 0.0;
  for (const Vector& z : codes) {
    const ExactTraces t = exact_traces(dec, z);
    tr += t.tr_r;
    tr2 += t.tr_r2;
  }
  const double n = static_cast<double>(codes.size());
  if (tr / n <= 1e-12) throw DegenerateError("constant_conformal_loss_exact: batch-mean Tr R is degenerate");
  return conformal_term(tr / n, tr2 / n, dec.input_dim());
}

// ---------------------------------------------------------------------------
// Differentiable recordings on a tape (used for training and gradients).

/// Per-point trace estimates as 1 x B tape nodes.
struct TraceNodes {
  ad::NodeId tr_r;
  ad::NodeId tr_r2;
};

/// Records JVP and VJP sweeps of `dec` at the primal codes in `primal`
/// (B columns) with one probe set per code; all sets must share count and weight.
TraceNodes record_traces(ad::Tape& tape, const nn::BoundMlp& dec, const nn::PrimalRecord& primal,
                         std::span<const ProbeSet> probes);

ad::NodeId record_recon(ad::Tape& tape, ad::NodeId data, ad::NodeId reconstruction);
ad::NodeId record_global_iso(ad::Tape& tape, ad::NodeId codes, ad::NodeId decoded);
ad::NodeId record_nonlinear_conformal(ad::Tape& tape, const TraceNodes& traces, int latent_dim);
ad::NodeId record_local_iso(ad::Tape& tape, const TraceNodes& traces, int latent_dim);
ad::NodeId record_constant_conformal(ad::Tape& tape, const TraceNodes& traces, int latent_dim);

}  // namespace confae::reg

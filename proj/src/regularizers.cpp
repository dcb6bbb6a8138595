#include "confae/regularizers.hpp"

#include <string>

namespace confae::reg {

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::GlobalIsometric: return "globiso";
    case Regularizer::LocalIsometric: return "lociso";
    case Regularizer::Conformal: return "conf";
    case Regularizer::ConstantConformal: return "constconf";
    case Regularizer::None: break;
  }
  return "none";
}

Regularizer parse_regularizer(std::string_view tag) {
  if (tag == "none") return Regularizer::None;
  if (tag == "globiso") return Regularizer::GlobalIsometric;
  if (tag == "lociso") return Regularizer::LocalIsometric;
  if (tag == "conf") return Regularizer::Conformal;
  if (tag == "constconf") return Regularizer::ConstantConformal;
  throw ConfigError("unknown regularizer '" + std::string(tag) + "' (expected none|globiso|lociso|conf|constconf)");
}

ProbeSet rademacher_probes(int dim, int count, std::mt19937_64& rng) {
  if (dim < 1 || count < 1) throw UsageError("rademacher_probes: dim and count must be positive");
  ProbeSet p;
  p.vectors.resize(dim, count);
  // One random bit per entry, drawn 64 at a time.
  std::uint64_t bits = 0;
  int left = 0;
  for (int c = 0; c < count; ++c) {
    for (int r = 0; r < dim; ++r) {
      if (left == 0) {
        bits = rng();
        left = 64;
      }
      p.vectors(r, c) = (bits & 1U) != 0 ? 1.0 : -1.0;
      bits >>= 1U;
      --left;
    }
  }
  p.weight = 1.0 / count;
  return p;
}

ProbeSet rademacher_probes(int dim, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProbeSet p = rademacher_probes(dim, count, rng);
  p.seed = seed;
  return p;
}

ProbeSet basis_probes(int dim) {
  if (dim < 1) throw UsageError("basis_probes: dim must be positive");
  return ProbeSet{Matrix::Identity(dim, dim), 1.0, 0};
}

std::vector<ProbeSet> draw_probes(int dim, int points, int count, std::mt19937_64& rng) {
  std::vector<ProbeSet> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) out.push_back(rademacher_probes(dim, count, rng));
  return out;
}

std::vector<ProbeSet> exact_probes(int dim, int points) {
  return std::vector<ProbeSet>(static_cast<std::size_t>(points), basis_probes(dim));
}

double recon_loss(const nn::Mlp& enc, const nn::Mlp& dec, std::span<const Vector> batch) {
  if (batch.empty()) throw UsageError("recon_loss: empty batch");
  if (enc.output_dim() != dec.input_dim() || dec.output_dim() != enc.input_dim())
    throw ShapeError("recon_loss: encoder/decoder dims do not chain X -> Z -> X");
  double s = 0.0;
  for (const Vector& x : batch) s += (x - nn::forward(dec, nn::forward(enc, x))).squaredNorm();
  return s / static_cast<double>(batch.size());
}

TraceNodes record_traces(ad::Tape& tape, const nn::BoundMlp& dec, const nn::PrimalRecord& primal,
                         std::span<const ProbeSet> probes) {
  const auto points = static_cast<std::size_t>(tape.value(primal.output).cols());
  if (points == 0) throw UsageError("record_traces: empty code batch");
  if (probes.size() != points) throw UsageError("record_traces: need one probe set per code");
  const int count = probes.front().count();
  const double weight = probes.front().weight;
  const int m = dec.net->input_dim();
  if (count == 0) throw UsageError("record_traces: empty probe set");
  Matrix stacked(m, static_cast<Eigen::Index>(points) * count);
  for (std::size_t i = 0; i < points; ++i) {
    const ProbeSet& p = probes[i];
    if (p.count() != count || p.weight != weight) throw UsageError("record_traces: probe sets differ in size");
    if (p.dim() != m) throw ShapeError("record_traces: probe dim differs from latent dim");
    stacked.middleCols(static_cast<Eigen::Index>(i) * count, count) = p.vectors;
  }
  const ad::NodeId v = tape.constant(std::move(stacked));
  const nn::TangentRecord jv = nn::record_jvp(tape, dec, primal, v, count);
  const ad::NodeId jtjv = nn::record_vjp(tape, dec, jv, jv.output);
  // weight * sum over the block = (weight * count) * block mean
  const double scale = weight * count;
  TraceNodes t;
  t.tr_r = tape.affine(tape.block_mean(tape.column_sq_norms(jv.output), count), scale, 0.0);
  t.tr_r2 = tape.affine(tape.block_mean(tape.column_sq_norms(jtjv), count), scale, 0.0);
  return t;
}

ad::NodeId record_recon(ad::Tape& tape, ad::NodeId data, ad::NodeId reconstruction) {
  if (tape.value(data).cols() == 0) throw UsageError("record_recon: empty batch");
  return tape.mean(tape.column_sq_norms(tape.sub(data, reconstruction)));
}

ad::NodeId record_global_iso(ad::Tape& tape, ad::NodeId codes, ad::NodeId decoded) {
  if (tape.value(codes).cols() < 2) throw UsageError("record_global_iso: need at least two codes");
  return tape.mean(tape.abs(tape.sub(tape.pairwise_distances(codes), tape.pairwise_distances(decoded))));
}

ad::NodeId record_nonlinear_conformal(ad::Tape& tape, const TraceNodes& traces, int latent_dim) {
  const Matrix& tr = tape.value(traces.tr_r);
  for (Eigen::Index i = 0; i < tr.cols(); ++i) {
    if (!(tr(0, i) > 1e-12))
      throw DegenerateError("nonlinear_conformal_loss: Tr R estimate " + std::to_string(tr(0, i)) +
                            " at code index " + std::to_string(i) + " (collapsed decoder)");
  }
  const ad::NodeId ratio = tape.divide(traces.tr_r2, tape.square(traces.tr_r));
  return tape.affine(tape.mean(ratio), 0.5 * latent_dim, -0.5);
}

ad::NodeId record_local_iso(ad::Tape& tape, const TraceNodes& traces, int latent_dim) {
  const double m = latent_dim;
  const ad::NodeId a = tape.affine(tape.mean(traces.tr_r2), 1.0 / (2.0 * m), 0.5);
  const ad::NodeId b = tape.affine(tape.mean(traces.tr_r), 1.0 / m, 0.0);
  return tape.sub(a, b);
}

ad::NodeId record_constant_conformal(ad::Tape& tape, const TraceNodes& traces, int latent_dim) {
  const ad::NodeId mean_tr = tape.mean(traces.tr_r);
  if (!(tape.scalar(mean_tr) > 1e-12)) throw DegenerateError("constant_conformal_loss: batch-mean Tr R is degenerate");
  const ad::NodeId ratio = tape.divide(tape.mean(traces.tr_r2), tape.square(mean_tr));
  return tape.affine(ratio, 0.5 * latent_dim, -0.5);
}

}  // namespace confae::reg

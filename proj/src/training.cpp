#include "confae/training.hpp"

#include "confae/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace confae::train {

namespace {

enum class Stream : std::uint32_t { Init = 1, Shuffle = 2, Probes = 3 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                    static_cast<std::uint32_t>(stream), index};
  return std::mt19937_64(seq);
}

std::vector<Activation> layer_activations(const std::string& tag, std::size_t layers) {
  // Hidden layers use the configured nonlinearity; the code and output layers are affine.
  std::vector<Activation> acts(layers, parse_activation(tag));
  acts.back() = Activation::identity();
  return acts;
}

Matrix gather(const Matrix& samples, const std::vector<std::size_t>& idx) {
  Matrix out(samples.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = samples.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + term + " loss");
}

}  // namespace

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errs;
  if (epochs < 1) errs.emplace_back("epochs: must be >= 1");
  if (batch_size < 1) errs.emplace_back("batch_size: must be >= 1");
  if (regularizer == reg::Regularizer::GlobalIsometric && batch_size < 2)
    errs.emplace_back("batch_size: globiso needs batches of at least 2 codes");
  if (!(learning_rate > 0.0)) errs.emplace_back("learning_rate: must be > 0");
  if (!(weight_decay >= 0.0)) errs.emplace_back("weight_decay: must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) errs.emplace_back("beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) errs.emplace_back("beta2: must lie in [0, 1)");
  if (!(epsilon > 0.0)) errs.emplace_back("epsilon: must be > 0");
  if (probes < 1) errs.emplace_back("probes: must be >= 1");
  if (regularizer != reg::Regularizer::None) {
    if (!lambda_geo.has_value()) {
      errs.emplace_back("lambda_geo: required when a regularizer is selected");
    } else if (!(*lambda_geo >= 0.0)) {
      errs.emplace_back("lambda_geo: must be >= 0");
    }
  }
  if (scheduler.enabled) {
    if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) errs.emplace_back("scheduler.factor: must lie in (0, 1)");
    if (scheduler.patience < 1) errs.emplace_back("scheduler.patience: must be >= 1");
    if (!(scheduler.min_lr >= 0.0)) errs.emplace_back("scheduler.min_lr: must be >= 0");
  }
  if (encoder_dims.size() < 2) {
    errs.emplace_back("encoder_dims: need at least input and latent dims");
  } else {
    if (std::any_of(encoder_dims.begin(), encoder_dims.end(), [](int d) { return d < 1; }))
      errs.emplace_back("encoder_dims: every dim must be >= 1");
    if (exact_trace && encoder_dims.back() > 3) errs.emplace_back("exact_trace: only supported for latent dim <= 3");
  }
  try {
    (void)parse_activation(activation);
  } catch (const std::exception&) {
    errs.emplace_back("activation: expected identity|relu|leaky_relu|tanh");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) errs.emplace_back("val_fraction: must lie in (0, 1)");
  if (checkpoint_every < 0) errs.emplace_back("checkpoint_every: must be >= 0");
  return errs;
}

std::vector<int> RunConfig::decoder_dims() const { return {encoder_dims.rbegin(), encoder_dims.rend()}; }

AdamState AdamState::zeros_like(const nn::Mlp& net) {
  AdamState s;
  for (const nn::Layer& l : net.layers()) {
    s.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    s.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    s.m_bias.push_back(Vector::Zero(l.bias.size()));
    s.v_bias.push_back(Vector::Zero(l.bias.size()));
  }
  return s;
}

void adamw_step(nn::Mlp& net, const nn::ParamGradient& grad, AdamState& state, const AdamParams& p) {
  if (!grad.congruent_to(net)) throw ShapeError("adamw_step: gradient does not match the network");
  if (state.m_weight.size() != net.depth()) throw ShapeError("adamw_step: optimizer state does not match the network");
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (p.weight_decay != 0.0) param *= (1.0 - p.lr * p.weight_decay);
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
    param.array() -= p.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + p.epsilon);
  };
  for (std::size_t i = 0; i < net.depth(); ++i) {
    nn::Layer& l = net.mutable_layer(i);
    update(l.weight, grad.weights[i], state.m_weight[i], state.v_weight[i]);
    update(l.bias, grad.biases[i], state.m_bias[i], state.v_bias[i]);
  }
}

double reduce_on_plateau(PlateauState& state, const SchedulerConfig& cfg, double val_loss) {
  if (val_loss < state.best - 1e-8) {
    state.best = val_loss;
    state.bad_epochs = 0;
    return state.lr;
  }
  if (++state.bad_epochs >= cfg.patience) {
    state.lr = std::max(state.lr * cfg.factor, cfg.min_lr);
    state.bad_epochs = 0;
  }
  return state.lr;
}

TrainState initial_state(const RunConfig& cfg) {
  const auto errs = cfg.validate();
  if (!errs.empty()) throw ConfigError("invalid run config: " + errs.front());
  const auto enc_dims = cfg.encoder_dims;
  const auto dec_dims = cfg.decoder_dims();
  auto rng = stream_rng(cfg.seed, Stream::Init, 0);
  const std::uint64_t enc_seed = rng();
  const std::uint64_t dec_seed = rng();
  TrainState s;
  s.encoder = nn::init(enc_dims, layer_activations(cfg.activation, enc_dims.size() - 1), enc_seed);
  s.decoder = nn::init(dec_dims, layer_activations(cfg.activation, dec_dims.size() - 1), dec_seed);
  s.encoder_opt = AdamState::zeros_like(s.encoder);
  s.decoder_opt = AdamState::zeros_like(s.decoder);
  s.scheduler.lr = cfg.learning_rate;
  return s;
}

StepResult evaluate_step(const RunConfig& cfg, const nn::Mlp& encoder, const nn::Mlp& decoder, const Matrix& batch,
                         std::mt19937_64& probe_rng, bool with_gradient) {
  ad::Tape tape;
  const nn::BoundMlp enc = nn::bind(tape, encoder, with_gradient);
  const nn::BoundMlp dec = nn::bind(tape, decoder, with_gradient);
  const ad::NodeId x = tape.constant(batch);
  const ad::NodeId codes = nn::record_forward(tape, enc, x).output;
  const nn::PrimalRecord decoded = nn::record_forward(tape, dec, codes);
  const ad::NodeId recon = reg::record_recon(tape, x, decoded.output);
  require_finite(tape.scalar(recon), "reconstruction");

  ad::NodeId total = recon;
  double geometric = 0.0;
  if (cfg.regularizer != reg::Regularizer::None) {
    ad::NodeId geo_codes = codes;
    nn::PrimalRecord geo_primal = decoded;
    if (cfg.detach_codes) {
      geo_codes = tape.constant(tape.value(codes));
      geo_primal = nn::record_forward(tape, dec, geo_codes);
    }
    const int m = decoder.input_dim();
    const auto points = static_cast<int>(batch.cols());
    ad::NodeId geo{};
    if (cfg.regularizer == reg::Regularizer::GlobalIsometric) {
      geo = reg::record_global_iso(tape, geo_codes, geo_primal.output);
    } else {
      const auto probes = cfg.exact_trace ? reg::exact_probes(m, points) : reg::draw_probes(m, points, cfg.probes, probe_rng);
      const reg::TraceNodes traces = reg::record_traces(tape, dec, geo_primal, probes);
      switch (cfg.regularizer) {
        case reg::Regularizer::LocalIsometric: geo = reg::record_local_iso(tape, traces, m); break;
        case reg::Regularizer::Conformal: geo = reg::record_nonlinear_conformal(tape, traces, m); break;
        case reg::Regularizer::ConstantConformal: geo = reg::record_constant_conformal(tape, traces, m); break;
        default: break;
      }
    }
    geometric = tape.scalar(geo);
    require_finite(geometric, reg::to_string(cfg.regularizer).c_str());
    total = tape.add(recon, tape.affine(geo, cfg.intensity(), 0.0));
  }

  StepResult r;
  r.loss = reg::LossBreakdown::compose(tape.scalar(recon), geometric, cfg.intensity());
  if (with_gradient) {
    tape.backward(total);
    r.encoder_grad = nn::collect_gradient(tape, enc);
    r.decoder_grad = nn::collect_gradient(tape, dec);
  }
  return r;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw UsageError("epoch_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = stream_rng(seed, Stream::Shuffle, static_cast<std::uint32_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

double validation_recon(const nn::Mlp& encoder, const nn::Mlp& decoder, const data::Dataset& val_set) {
  if (val_set.size() == 0) return 0.0;
  const Matrix rec = nn::forward_batch(decoder, nn::forward_batch(encoder, val_set.samples));
  return (val_set.samples - rec).colwise().squaredNorm().mean();
}

RunMetrics train(const RunConfig& cfg, const data::Dataset& train_set, const data::Dataset& val_set, TrainState& state,
                 const EpochCallback& on_epoch) {
  const auto errs = cfg.validate();
  if (!errs.empty()) throw ConfigError("invalid run config: " + errs.front());
  if (train_set.size() == 0) throw UsageError("train: empty training set");
  if (train_set.features() != state.encoder.input_dim()) throw ShapeError("train: data dim differs from encoder input");

  RunMetrics metrics;
  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto probe_rng = stream_rng(cfg.seed, Stream::Probes, static_cast<std::uint32_t>(epoch));
    const auto batches = epoch_batches(train_set.size(), cfg.batch_size, cfg.seed, epoch);
    const double lr = state.scheduler.lr;
    const AdamParams adam{lr, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay};

    double recon = 0.0;
    double geo = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      StepResult step;
      try {
        step = evaluate_step(cfg, state.encoder, state.decoder, gather(train_set.samples, batches[b]), probe_rng);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      adamw_step(state.encoder, step.encoder_grad, state.encoder_opt, adam);
      adamw_step(state.decoder, step.decoder_grad, state.decoder_opt, adam);
      recon += step.loss.recon;
      geo += step.loss.geometric;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = static_cast<int>(batches.size());
    rec.recon = recon / static_cast<double>(batches.size());
    rec.geometric = geo / static_cast<double>(batches.size());
    rec.total = rec.recon + cfg.intensity() * rec.geometric;
    rec.val_recon = validation_recon(state.encoder, state.decoder, val_set);
    rec.lr = lr;
    if (!std::isfinite(rec.val_recon))
      throw NumericalError("non-finite validation reconstruction at epoch " + std::to_string(epoch));
    if (cfg.scheduler.enabled) reduce_on_plateau(state.scheduler, cfg.scheduler, rec.val_recon);
    state.epoch = epoch;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, state);
  }
  return metrics;
}

TrainResult train(const RunConfig& cfg, const data::Dataset& ds) {
  const data::Dataset standardized = data::standardize(ds);
  const auto [train_set, val_set] = data::split(standardized, cfg.val_fraction, cfg.seed);
  TrainState state = initial_state(cfg);
  RunMetrics metrics = train(cfg, train_set, val_set, state);
  return {std::move(state.encoder), std::move(state.decoder), std::move(metrics)};
}

IntensityProposal calibrate_intensity(const RunConfig& cfg, const data::Dataset& train_set) {
  if (cfg.regularizer == reg::Regularizer::None) throw ConfigError("calibrate_intensity: no regularizer selected");
  RunConfig probe_cfg = cfg;
  probe_cfg.lambda_geo = 0.0;
  const TrainState state = initial_state(probe_cfg);
  auto probe_rng = stream_rng(cfg.seed, Stream::Probes, 1);
  const auto batches = epoch_batches(train_set.size(), cfg.batch_size, cfg.seed, 1);
  IntensityProposal p;
  for (const auto& b : batches) {
    const StepResult r = evaluate_step(probe_cfg, state.encoder, state.decoder, gather(train_set.samples, b), probe_rng, false);
    p.recon += r.loss.recon;
    p.geometric += r.loss.geometric;
  }
  p.recon /= static_cast<double>(batches.size());
  p.geometric /= static_cast<double>(batches.size());
  if (!(p.geometric > 0.0)) throw DegenerateError("calibrate_intensity: geometric term vanishes on the initial model");
  p.lambda_geo = p.recon / p.geometric;
  return p;
}

}  // namespace confae::train

#pragma once

#include "confae/data.hpp"
#include "confae/mlp.hpp"
#include "confae/regularizers.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <optional>
#include <string>
#include <vector>

namespace confae::train {

using linalg::Matrix;
using linalg::Vector;

struct SchedulerConfig {
  bool enabled = false;
  double factor = 0.5;
  int patience = 10;
  double min_lr = 1e-6;
};

struct RunConfig {
  reg::Regularizer regularizer = reg::Regularizer::None;
  std::optional<double> lambda_geo;  // required unless regularizer == none
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int probes = 8;
  SchedulerConfig scheduler;
  std::uint64_t seed = 0;
  bool exact_trace = false;
  bool detach_codes = false;
  std::vector<int> encoder_dims{3, 50, 50, 50, 2};
  std::string activation = "relu";
  double val_fraction = 0.2;
  int checkpoint_every = 0;  // epochs between intermediate checkpoints; 0 = final only

  /// Every violated constraint, one message each. Empty when valid.
  std::vector<std::string> validate() const;
  double intensity() const { return regularizer == reg::Regularizer::None ? 0.0 : lambda_geo.value_or(0.0); }
  std::vector<int> decoder_dims() const;
  int latent_dim() const { return encoder_dims.back(); }
};

// ---------------------------------------------------------------------------
// AdamW

struct AdamState {
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;
  long step = 0;

  static AdamState zeros_like(const nn::Mlp& net);
};

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// One AdamW step: theta <- theta - lr*wd*theta, then the bias-corrected Adam update.
void adamw_step(nn::Mlp& net, const nn::ParamGradient& grad, AdamState& state, const AdamParams& p);

// ---------------------------------------------------------------------------
// Reduce-on-plateau

struct PlateauState {
  double lr = 1e-3;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
};

/// Multiplies lr by `factor` (clamped at min_lr) once `patience` consecutive
/// epochs pass without improving on the best value by more than 1e-8.
double reduce_on_plateau(PlateauState& state, const SchedulerConfig& cfg, double val_loss);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;  // 1-based
  double recon = 0.0;
  double geometric = 0.0;
  double total = 0.0;
  double val_recon = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  int steps = 0;
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
};

/// Everything needed to continue a run.
struct TrainState {
  nn::Mlp encoder;
  nn::Mlp decoder;
  AdamState encoder_opt;
  AdamState decoder_opt;
  PlateauState scheduler;
  int epoch = 0;  // completed epochs
};

TrainState initial_state(const RunConfig& cfg);

/// Loss terms of one minibatch with the parameter gradients.
struct StepResult {
  reg::LossBreakdown loss;
  nn::ParamGradient encoder_grad;
  nn::ParamGradient decoder_grad;
};

/// Evaluates recon + lambda * geometric on a batch (columns of `batch`) and
/// differentiates it. Probes are frozen for the call.
StepResult evaluate_step(const RunConfig& cfg, const nn::Mlp& encoder, const nn::Mlp& decoder, const Matrix& batch,
                         std::mt19937_64& probe_rng, bool with_gradient = true);

/// Minibatch index lists for one epoch: seeded shuffle; a trailing batch of
/// size 1 is merged into the previous one.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Runs epochs state.epoch+1 .. cfg.epochs. Deterministic given the config
/// and the state.
RunMetrics train(const RunConfig& cfg, const data::Dataset& train_set, const data::Dataset& val_set, TrainState& state,
                 const EpochCallback& on_epoch = {});

struct TrainResult {
  nn::Mlp encoder;
  nn::Mlp decoder;
  RunMetrics metrics;
};

/// Standardizes, splits by cfg.val_fraction and cfg.seed, trains from scratch.
TrainResult train(const RunConfig& cfg, const data::Dataset& ds);

/// Proposed intensity recon / geometric on the untrained model, averaged over
/// the first epoch's minibatches.
struct IntensityProposal {
  double recon = 0.0;
  double geometric = 0.0;
  double lambda_geo = 0.0;
};

IntensityProposal calibrate_intensity(const RunConfig& cfg, const data::Dataset& train_set);

double validation_recon(const nn::Mlp& encoder, const nn::Mlp& decoder, const data::Dataset& val_set);

}  // namespace confae::train

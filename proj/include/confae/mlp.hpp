#pragma once

#include "confae/activation.hpp"
#include "confae/linalg.hpp"
#include "confae/tape.hpp"

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace confae::nn {

using linalg::Matrix;
using linalg::Vector;

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation;

  bool operator==(const Layer& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && weight == o.weight &&
           bias.size() == o.bias.size() && bias == o.bias && activation == o.activation;
  }
};

/// Fully connected feed-forward network. Layer dimensions chain and every
/// parameter is finite; both are checked on construction.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  int input_dim() const;
  int output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  std::vector<int> dims() const;
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  // Optimizers update parameters in place; shapes must stay fixed.
  Layer& mutable_layer(std::size_t i) { return layers_.at(i); }

  // SmoothMap surface shared with analytic maps (see geometry.hpp).
  Vector operator()(const Vector& x) const;
  Vector jvp(const Vector& z, const Vector& v) const;
  Vector vjp(const Vector& z, const Vector& u) const;
  Matrix jacobian(const Vector& z) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<Layer> layers_;
};

/// Gradient of a scalar with respect to every parameter of an Mlp.
struct ParamGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamGradient zeros_like(const Mlp& net);
  bool congruent_to(const Mlp& net) const;
};

/// He-normal weights for (Leaky)ReLU layers, Glorot-normal otherwise; zero biases.
Mlp init(std::span<const int> dims, std::span<const Activation> activations, std::uint64_t seed);

Vector forward(const Mlp& net, const Vector& x);
Matrix forward_batch(const Mlp& net, const Matrix& columns);

struct LayerTrace {
  Vector pre;
  Vector out;
  Vector tangent_pre;
  Vector tangent_out;
};

struct DualTrace {
  std::vector<LayerTrace> layers;
};

struct JvpResult {
  Vector y;
  Vector jv;
  DualTrace trace;
};

struct VjpResult {
  Vector y;
  Vector jtu;
};

JvpResult jvp(const Mlp& net, const Vector& z, const Vector& v);
VjpResult vjp(const Mlp& net, const Vector& z, const Vector& u);
/// Column k is the directional derivative along e_k.
Matrix jacobian(const Mlp& net, const Vector& z);

// ---------------------------------------------------------------------------
// Recording on a tape

/// Parameter leaves of a network on a tape.
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<ad::NodeId> weights;
  std::vector<ad::NodeId> biases;
};

/// Registers the parameters as tape leaves. Frozen networks become constants.
BoundMlp bind(ad::Tape& tape, const Mlp& net, bool trainable = true);

/// Primal pass over a batch of column inputs.
struct PrimalRecord {
  ad::NodeId output;
  std::vector<ad::NodeId> pre;  // pre-activations per layer
};

PrimalRecord record_forward(ad::Tape& tape, const BoundMlp& net, ad::NodeId inputs);

/// Tangent pass: `tangents` holds `per_point` consecutive columns for every
/// primal column. Activation slopes are tape nodes, so the tangent output is
/// differentiable with respect to parameters and primal inputs.
struct TangentRecord {
  ad::NodeId output;
  std::vector<ad::NodeId> slopes;  // act'(pre), repeated to tangent width
};

TangentRecord record_jvp(ad::Tape& tape, const BoundMlp& net, const PrimalRecord& primal,
                         ad::NodeId tangents, int per_point);

/// Adjoint sweep J^T u along the linearization recorded in `tangent`.
ad::NodeId record_vjp(ad::Tape& tape, const BoundMlp& net, const TangentRecord& tangent,
                      ad::NodeId cotangents);

/// Reads parameter adjoints after `tape.backward`.
ParamGradient collect_gradient(const ad::Tape& tape, const BoundMlp& net);

/// Runs the reverse sweep from `loss` and returns the gradient for `net`.
ParamGradient grad_scalar(ad::Tape& tape, ad::NodeId loss, const BoundMlp& net);

// ---------------------------------------------------------------------------
// Checkpoint format

inline constexpr int kCheckpointFormatVersion = 1;

void to_json(nlohmann::json& j, const Mlp& net);
void from_json(const nlohmann::json& j, Mlp& net);

}  // namespace confae::nn

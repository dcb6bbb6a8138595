#include "confae/mlp.hpp"

#include "confae/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace confae {

std::string to_string(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::LeakyRelu: return "leaky_relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Identity: break;
  }
  return "identity";
}

Activation parse_activation(std::string_view tag, double slope) {
  if (tag == "identity") return Activation::identity();
  if (tag == "relu") return Activation::relu();
  if (tag == "leaky_relu") return Activation::leaky_relu(slope);
  if (tag == "tanh") return Activation::tanh();
  throw ParseError("unknown activation tag '" + std::string(tag) + "'");
}

}  // namespace confae

namespace confae::nn {

namespace {

void require_dim(Eigen::Index got, int want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

Vector apply(const Activation& act, const Vector& x) {
  return x.unaryExpr([act](double v) { return act.apply(v); });
}

Vector slope(const Activation& act, const Vector& x) {
  return x.unaryExpr([act](double v) { return act.derivative(v); });
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw UsageError("Mlp: at least one layer required");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0) throw ShapeError("Mlp: empty weight matrix");
    if (l.bias.size() != l.weight.rows()) throw ShapeError("Mlp: bias length differs from weight rows");
    if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())
      throw ShapeError("Mlp: layer " + std::to_string(i) + " input dim does not chain");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw ShapeError("Mlp: layer " + std::to_string(i) + " has non-finite parameters");
  }
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> Mlp::dims() const {
  std::vector<int> d;
  if (layers_.empty()) return d;
  d.push_back(input_dim());
  for (const Layer& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
  return d;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector Mlp::operator()(const Vector& x) const { return forward(*this, x); }
Vector Mlp::jvp(const Vector& z, const Vector& v) const { return nn::jvp(*this, z, v).jv; }
Vector Mlp::vjp(const Vector& z, const Vector& u) const { return nn::vjp(*this, z, u).jtu; }
Matrix Mlp::jacobian(const Vector& z) const { return nn::jacobian(*this, z); }

ParamGradient ParamGradient::zeros_like(const Mlp& net) {
  ParamGradient g;
  for (const Layer& l : net.layers()) {
    g.weights.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.biases.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

bool ParamGradient::congruent_to(const Mlp& net) const {
  if (weights.size() != net.depth() || biases.size() != net.depth()) return false;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Layer& l = net.layer(i);
    if (weights[i].rows() != l.weight.rows() || weights[i].cols() != l.weight.cols()) return false;
    if (biases[i].size() != l.bias.size()) return false;
  }
  return true;
}

Mlp init(std::span<const int> dims, std::span<const Activation> activations, std::uint64_t seed) {
  if (dims.size() < 2) throw UsageError("init: need at least input and output dims");
  if (activations.size() != dims.size() - 1)
    throw UsageError("init: need one activation per layer (" + std::to_string(dims.size() - 1) + ")");
  for (int d : dims)
    if (d < 1) throw UsageError("init: dims must be positive");

  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const Activation act = activations[i];
    const bool rectifier = act.kind == ActivationKind::Relu || act.kind == ActivationKind::LeakyRelu;
    const double variance = rectifier ? 2.0 / fan_in : 2.0 / (fan_in + fan_out);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    Layer l{Matrix(fan_out, fan_in), Vector::Zero(fan_out), act};
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = normal(rng);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

Vector forward(const Mlp& net, const Vector& x) {
  require_dim(x.size(), net.input_dim(), "forward");
  Vector h = x;
  for (const Layer& l : net.layers()) h = apply(l.activation, l.weight * h + l.bias);
  return h;
}

Matrix forward_batch(const Mlp& net, const Matrix& columns) {
  require_dim(columns.rows(), net.input_dim(), "forward_batch");
  Matrix h = columns;
  for (const Layer& l : net.layers()) {
    Matrix pre = (l.weight * h).colwise() + l.bias;
    const Activation act = l.activation;
    h = pre.unaryExpr([act](double v) { return act.apply(v); });
  }
  return h;
}

JvpResult jvp(const Mlp& net, const Vector& z, const Vector& v) {
  require_dim(z.size(), net.input_dim(), "jvp (z)");
  require_dim(v.size(), net.input_dim(), "jvp (v)");
  JvpResult r;
  Vector h = z;
  Vector t = v;
  for (const Layer& l : net.layers()) {
    LayerTrace rec;
    rec.pre = l.weight * h + l.bias;
    rec.tangent_pre = l.weight * t;
    rec.out = apply(l.activation, rec.pre);
    rec.tangent_out = slope(l.activation, rec.pre).cwiseProduct(rec.tangent_pre);
    h = rec.out;
    t = rec.tangent_out;
    r.trace.layers.push_back(std::move(rec));
  }
  r.y = std::move(h);
  r.jv = std::move(t);
  return r;
}

VjpResult vjp(const Mlp& net, const Vector& z, const Vector& u) {
  require_dim(z.size(), net.input_dim(), "vjp (z)");
  require_dim(u.size(), net.output_dim(), "vjp (u)");
  std::vector<Vector> slopes;
  Vector h = z;
  for (const Layer& l : net.layers()) {
    Vector pre = l.weight * h + l.bias;
    slopes.push_back(slope(l.activation, pre));
    h = apply(l.activation, pre);
  }
  Vector adj = u;
  for (std::size_t i = net.depth(); i-- > 0;) {
    adj = net.layer(i).weight.transpose() * slopes[i].cwiseProduct(adj);
  }
  return {std::move(h), std::move(adj)};
}

Matrix jacobian(const Mlp& net, const Vector& z) {
  require_dim(z.size(), net.input_dim(), "jacobian");
  Vector h = z;
  Matrix t = Matrix::Identity(net.input_dim(), net.input_dim());
  for (const Layer& l : net.layers()) {
    Vector pre = l.weight * h + l.bias;
    t = slope(l.activation, pre).asDiagonal() * (l.weight * t);
    h = apply(l.activation, pre);
  }
  return t;
}

BoundMlp bind(ad::Tape& tape, const Mlp& net, bool trainable) {
  BoundMlp b;
  b.net = &net;
  for (const Layer& l : net.layers()) {
    Matrix bias = l.bias;
    if (trainable) {
      b.weights.push_back(tape.variable(l.weight));
      b.biases.push_back(tape.variable(std::move(bias)));
    } else {
      b.weights.push_back(tape.constant(l.weight));
      b.biases.push_back(tape.constant(std::move(bias)));
    }
  }
  return b;
}

PrimalRecord record_forward(ad::Tape& tape, const BoundMlp& net, ad::NodeId inputs) {
  require_dim(tape.value(inputs).rows(), net.net->input_dim(), "record_forward");
  PrimalRecord rec;
  ad::NodeId h = inputs;
  for (std::size_t i = 0; i < net.net->depth(); ++i) {
    const ad::NodeId pre = tape.add_bias(tape.matmul(net.weights[i], h), net.biases[i]);
    rec.pre.push_back(pre);
    h = tape.activate(pre, net.net->layer(i).activation);
  }
  rec.output = h;
  return rec;
}

TangentRecord record_jvp(ad::Tape& tape, const BoundMlp& net, const PrimalRecord& primal,
                         ad::NodeId tangents, int per_point) {
  require_dim(tape.value(tangents).rows(), net.net->input_dim(), "record_jvp");
  const Eigen::Index points = tape.value(primal.output).cols();
  if (per_point < 1 || tape.value(tangents).cols() != points * per_point)
    throw ShapeError("record_jvp: tangent columns must equal primal columns times per_point");
  TangentRecord rec;
  ad::NodeId t = tangents;
  for (std::size_t i = 0; i < net.net->depth(); ++i) {
    ad::NodeId s = tape.activate_derivative(primal.pre[i], net.net->layer(i).activation);
    if (per_point > 1) s = tape.repeat_columns(s, per_point);
    rec.slopes.push_back(s);
    t = tape.hadamard(s, tape.matmul(net.weights[i], t));
  }
  rec.output = t;
  return rec;
}

ad::NodeId record_vjp(ad::Tape& tape, const BoundMlp& net, const TangentRecord& tangent,
                      ad::NodeId cotangents) {
  require_dim(tape.value(cotangents).rows(), net.net->output_dim(), "record_vjp");
  ad::NodeId adj = cotangents;
  for (std::size_t i = net.net->depth(); i-- > 0;) {
    adj = tape.matmul_transposed(net.weights[i], tape.hadamard(tangent.slopes[i], adj));
  }
  return adj;
}

ParamGradient collect_gradient(const ad::Tape& tape, const BoundMlp& net) {
  if (!tape.has_gradients()) throw UsageError("collect_gradient: no reverse sweep has been recorded");
  ParamGradient g;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    g.weights.push_back(tape.gradient(net.weights[i]));
    g.biases.push_back(tape.gradient(net.biases[i]).col(0));
  }
  return g;
}

ParamGradient grad_scalar(ad::Tape& tape, ad::NodeId loss, const BoundMlp& net) {
  if (tape.size() == 0 || !tape.contains(loss)) throw UsageError("grad_scalar: loss is not recorded on this tape");
  if (net.net == nullptr) throw UsageError("grad_scalar: network is not bound to a tape");
  tape.backward(loss);
  return collect_gradient(tape, net);
}

void to_json(nlohmann::json& j, const Mlp& net) {
  j = nlohmann::json::object();
  j["format_version"] = kCheckpointFormatVersion;
  j["dims"] = net.dims();
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    nlohmann::json lj;
    lj["activation"] = to_string(l.activation);
    if (l.activation.kind == ActivationKind::LeakyRelu) lj["slope"] = l.activation.slope;
    lj["weight"] = std::move(w);
    lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
}

void from_json(const nlohmann::json& j, Mlp& net) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw ParseError("network: unsupported format_version " + std::to_string(version));
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto& layers = j.at("layers");
    if (dims.size() != layers.size() + 1) throw ParseError("network: dims and layers disagree");
    std::vector<Layer> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& lj = layers[i];
      const double slope = lj.value("slope", 0.01);
      const Activation act = parse_activation(lj.at("activation").get<std::string>(), slope);
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      const int rows = dims[i + 1];
      const int cols = dims[i];
      if (w.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) ||
          b.size() != static_cast<std::size_t>(rows))
        throw ParseError("network: layer " + std::to_string(i) + " parameter count mismatch");
      Layer l{Matrix(rows, cols), Vector(rows), act};
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      for (int r = 0; r < rows; ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
      out.push_back(std::move(l));
    }
    net = Mlp(std::move(out));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network: ") + e.what());
  }
}

}  // namespace confae::nn

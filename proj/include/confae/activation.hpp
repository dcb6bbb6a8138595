#pragma once

#include <cmath>
#include <string>
#include <string_view>

namespace confae {

enum class ActivationKind { Identity, Relu, LeakyRelu, Tanh };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double slope = 0.01;  // negative-side slope, LeakyRelu only

  static Activation identity() { return {ActivationKind::Identity, 0.01}; }
  static Activation relu() { return {ActivationKind::Relu, 0.01}; }
  static Activation leaky_relu(double slope = 0.01) { return {ActivationKind::LeakyRelu, slope}; }
  static Activation tanh() { return {ActivationKind::Tanh, 0.01}; }

  double apply(double x) const {
    switch (kind) {
      case ActivationKind::Relu: return x > 0.0 ? x : 0.0;
      case ActivationKind::LeakyRelu: return x > 0.0 ? x : slope * x;
      case ActivationKind::Tanh: return std::tanh(x);
      case ActivationKind::Identity: break;
    }
    return x;
  }

  // The kink at exactly zero gets the left derivative.
  double derivative(double x) const {
    switch (kind) {
      case ActivationKind::Relu: return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::LeakyRelu: return x > 0.0 ? 1.0 : slope;
      case ActivationKind::Tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActivationKind::Identity: break;
    }
    return 1.0;
  }

  double second_derivative(double x) const {
    if (kind != ActivationKind::Tanh) return 0.0;
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
  }

  // Piecewise-linear activations have a locally constant derivative.
  bool has_curvature() const { return kind == ActivationKind::Tanh; }

  bool operator==(const Activation&) const = default;
};

std::string to_string(const Activation& act);
Activation parse_activation(std::string_view tag, double slope = 0.01);

}  // namespace confae

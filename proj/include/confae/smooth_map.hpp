#pragma once

#include "confae/linalg.hpp"

#include <concepts>

namespace confae {

/// A differentiable map R^m -> R^n exposing its linearization: learned
/// decoders (nn::Mlp) and analytic parametrizations (data::SwissRollMap).
template <class F>
concept SmoothMap = requires(const F& f, const linalg::Vector& z) {
  { f.input_dim() } -> std::convertible_to<int>;
  { f.output_dim() } -> std::convertible_to<int>;
  { f(z) } -> std::convertible_to<linalg::Vector>;
  { f.jvp(z, z) } -> std::convertible_to<linalg::Vector>;
  { f.vjp(z, f(z)) } -> std::convertible_to<linalg::Vector>;
  { f.jacobian(z) } -> std::convertible_to<linalg::Matrix>;
};

}  // namespace confae

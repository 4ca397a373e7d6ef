// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cfedit/autodiff.hpp"

namespace cfedit {

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::int64_t step = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Parameter<Scalar>> params) {
    AdamState state;
    for (const auto& p : params) {
      state.m.push_back(Tensor<Scalar>::zeros_like(p.value));
      state.v.push_back(Tensor<Scalar>::zeros_like(p.value));
    }
    return state;
  }
};

/// Bias-corrected Adam update on every parameter. Throws NumericError naming
/// the first parameter whose gradient is not finite; nothing is modified then.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>> params, AdamState<Scalar>& state, Scalar lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].value.shape(), params[i].grad.shape(), "adam_step grad");
    require_same_shape(params[i].value.shape(), state.m[i].shape(), "adam_step moment");
    if (!params[i].grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter '" + params[i].name + "' at step " +
                         std::to_string(state.step + 1));
    }
  }
  state.step += 1;
  const auto t = static_cast<Scalar>(state.step);
  const Scalar bc1 = Scalar(1) - std::pow(state.beta1, t);
  const Scalar bc2 = Scalar(1) - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& g = params[i].grad.array();
    auto& m = state.m[i].array();
    auto& v = state.v[i].array();
    m = state.beta1 * m + (Scalar(1) - state.beta1) * g;
    v = state.beta2 * v + (Scalar(1) - state.beta2) * g.square();
    params[i].value.array() -= lr * (m / bc1) / ((v / bc2).sqrt() + state.eps);
  }
}

/// Global L2 norm of all gradients.
template <typename Scalar>
Scalar grad_norm(std::span<const Parameter<Scalar>> params) {
  Scalar total = 0;
  for (const auto& p : params) total += p.grad.array().square().sum();
  return std::sqrt(total);
}

}  // namespace cfedit

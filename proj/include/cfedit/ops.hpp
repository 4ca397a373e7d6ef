// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <type_traits>

#include "cfedit/autodiff.hpp"

namespace cfedit {

// Differentiable operations. Every function records its output on the tape of
// its first argument; all Vars passed to one call must share that tape.

/// 2-D convolution, NCHW input and OIkk kernel, optional per-output-channel bias.
/// Lowered to im2col + GEMM, one image at a time.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, std::optional<Var<std::type_identity_t<Scalar>>> bias, int stride, int pad);

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, int stride, int pad) {
  return conv2d(input, kernel, std::nullopt, stride, pad);
}

/// Group normalization over (channels-in-group x spatial) with per-channel affine.
template <typename Scalar>
Var<Scalar> group_norm(Var<Scalar> input, int groups, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps = Scalar(1e-5));

template <typename Scalar>
Var<Scalar> silu(Var<Scalar> x);

/// y = x W^T + b for x (N, in), W (out, in), b (out).
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, std::optional<Var<std::type_identity_t<Scalar>>> bias);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor);

/// Broadcast-add a (N, C) tensor over the spatial dims of x (N, C, H, W).
template <typename Scalar>
Var<Scalar> add_channelwise(Var<Scalar> x, Var<Scalar> per_channel);

/// Concatenate NCHW tensors along channels.
template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b);

/// Nearest-neighbour 2x spatial upsampling.
template <typename Scalar>
Var<Scalar> upsample2x(Var<Scalar> x);

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x);

/// Mean squared error over all elements (mean reduction).
template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) { return mul(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> x) { return scale(x, s); }

/// Plain (non-differentiable) convolution written as nested loops. Kept as the
/// reference the GEMM path is tested against.
template <typename Scalar>
Tensor<Scalar> conv2d_reference(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>* bias,
                                int stride, int pad);

/// Output spatial size of a convolution.
constexpr int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

#define CFEDIT_EXTERN_OPS(S)                                                                           \
  extern template Var<S> conv2d(Var<S>, Var<S>, std::optional<Var<std::type_identity_t<S>>>, int, int);                      \
  extern template Var<S> group_norm(Var<S>, int, Var<S>, Var<S>, S);                                   \
  extern template Var<S> silu(Var<S>);                                                                 \
  extern template Var<S> linear(Var<S>, Var<S>, std::optional<Var<std::type_identity_t<S>>>);                                \
  extern template Var<S> add(Var<S>, Var<S>);                                                          \
  extern template Var<S> sub(Var<S>, Var<S>);                                                          \
  extern template Var<S> mul(Var<S>, Var<S>);                                                          \
  extern template Var<S> scale(Var<S>, S);                                                             \
  extern template Var<S> add_channelwise(Var<S>, Var<S>);                                              \
  extern template Var<S> concat_channels(Var<S>, Var<S>);                                              \
  extern template Var<S> upsample2x(Var<S>);                                                           \
  extern template Var<S> sum(Var<S>);                                                                  \
  extern template Var<S> mse(Var<S>, Var<S>);                                                          \
  extern template Tensor<S> conv2d_reference(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, int, int);

CFEDIT_EXTERN_OPS(float)
CFEDIT_EXTERN_OPS(double)
#undef CFEDIT_EXTERN_OPS

}  // namespace cfedit

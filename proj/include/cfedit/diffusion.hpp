// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfedit/denoiser.hpp"
#include "cfedit/image.hpp"
#include "cfedit/rng.hpp"

namespace cfedit {

/// Variance-preserving cosine schedule; alpha[t]^2 + sigma[t]^2 = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;
};

NoiseSchedule make_schedule(int T = 1000);

/// Closed-form alpha-bar of the cosine schedule at integer t.
double cosine_alpha_bar(int t, int T);

/// alpha_t * x + sigma_t * eps.
template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& x, int t, const Tensor<Scalar>& eps, const NoiseSchedule& sched);

/// Per-element timesteps along the leading (batch) dim.
template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& x, std::span<const int> t, const Tensor<Scalar>& eps,
                               const NoiseSchedule& sched);

/// Timesteps and noise for one training batch.
template <typename Scalar>
struct NoiseDraw {
  std::vector<int> t;
  Tensor<Scalar> eps;
};

/// One uniform t on {0..T} and one standard normal eps per batch element.
template <typename Scalar>
NoiseDraw<Scalar> draw_noise(const Shape& target_shape, const NoiseSchedule& sched, Rng& rng);

/// Mean squared error between the model's noise prediction and eps, recorded
/// on `tape` so the caller can backpropagate.
/// target: (N,3,H,W) in [-1,1]; condition: (N, condition_channels, H, W).
template <typename Scalar>
Var<Scalar> diffusion_loss(NoisePredictor<Scalar>& model, Tape<Scalar>& tape, const Tensor<Scalar>& target,
                           const Tensor<Scalar>& condition, const NoiseDraw<Scalar>& draw, const NoiseSchedule& sched);

/// draw_noise + diffusion_loss + backward. Gradients accumulate into the
/// model's parameters; the tape is reset on entry. Throws NumericError with
/// batch diagnostics on a non-finite loss.
template <typename Scalar>
Scalar loss_step(NoisePredictor<Scalar>& model, Tape<Scalar>& tape, const Tensor<Scalar>& target,
                 const Tensor<Scalar>& condition, const NoiseSchedule& sched, Rng& rng);

/// Descending timestep grid T = t_0 > t_1 > ... > t_{steps-1} > 0.
std::vector<int> sampling_grid(int T, int steps);

/// Deterministic DDIM (eta = 0). Image i starts from noise seeded by seeds[i]
/// so results do not depend on how images are batched. Returns (N,3,H,W) in
/// [-1,1].
template <typename Scalar>
Tensor<Scalar> ddim_sample(NoisePredictor<Scalar>& model, const Tensor<Scalar>& condition, std::span<const std::uint64_t> seeds,
                           const NoiseSchedule& sched, int steps = 50);

/// Image-domain convenience: condition image + mask in, [0,1] image out.
ImageBuffer sample(NoisePredictor<float>& model, const ImageBuffer& condition, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps = 50);

/// Batched form of sample(); `batch` images per network call.
std::vector<ImageBuffer> sample_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> conditions,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps = 50, int batch = 8);

/// (N,4,H,W) network condition from images in [0,1] and binary masks.
Tensor<float> edit_condition(std::span<const ImageBuffer> images, std::span<const MaskBuffer> masks);

extern template Tensor<float> forward_diffuse(const Tensor<float>&, int, const Tensor<float>&, const NoiseSchedule&);
extern template Tensor<double> forward_diffuse(const Tensor<double>&, int, const Tensor<double>&, const NoiseSchedule&);
extern template NoiseDraw<float> draw_noise(const Shape&, const NoiseSchedule&, Rng&);
extern template NoiseDraw<double> draw_noise(const Shape&, const NoiseSchedule&, Rng&);
extern template float loss_step(NoisePredictor<float>&, Tape<float>&, const Tensor<float>&, const Tensor<float>&,
                                const NoiseSchedule&, Rng&);
extern template double loss_step(NoisePredictor<double>&, Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                                 const NoiseSchedule&, Rng&);

}  // namespace cfedit

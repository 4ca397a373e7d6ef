// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cfedit {

double cosine_alpha_bar(int t, int T) {
  auto f = [T](int s) {
    const double c = std::cos((static_cast<double>(s) / T + 0.008) / 1.008 * std::numbers::pi / 2.0);
    return c * c;
  };
  return f(t) / f(0);
}

NoiseSchedule make_schedule(int T) {
  if (T < 2) throw ArgumentError("make_schedule: T must be >= 2, got " + std::to_string(T));
  NoiseSchedule s;
  s.T = T;
  s.alpha.resize(static_cast<std::size_t>(T) + 1);
  s.sigma.resize(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) {
    // f(T) is ~1e-33 rather than 0, so clamp against tiny negative round-off.
    const double ab = std::clamp(cosine_alpha_bar(t, T), 0.0, 1.0);
    s.alpha[static_cast<std::size_t>(t)] = std::sqrt(ab);
    s.sigma[static_cast<std::size_t>(t)] = std::sqrt(1.0 - ab);
  }
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& sched) {
  if (t < 0 || t > sched.T) {
    throw ArgumentError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + "]");
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& x, int t, const Tensor<Scalar>& eps, const NoiseSchedule& sched) {
  check_t(t, sched);
  require_same_shape(x.shape(), eps.shape(), "forward_diffuse");
  const auto a = static_cast<Scalar>(sched.alpha[static_cast<std::size_t>(t)]);
  const auto s = static_cast<Scalar>(sched.sigma[static_cast<std::size_t>(t)]);
  return Tensor<Scalar>(x.shape(), (a * x.array() + s * eps.array()).eval());
}

template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& x, std::span<const int> t, const Tensor<Scalar>& eps,
                               const NoiseSchedule& sched) {
  require_same_shape(x.shape(), eps.shape(), "forward_diffuse");
  if (x.rank() == 0 || static_cast<std::size_t>(x.dim(0)) != t.size()) {
    throw ShapeError("forward_diffuse: " + std::to_string(t.size()) + " timesteps for shape " + shape_str(x.shape()));
  }
  Tensor<Scalar> out(x.shape());
  const auto len = static_cast<Eigen::Index>(x.size() / t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    check_t(t[i], sched);
    const auto a = static_cast<Scalar>(sched.alpha[static_cast<std::size_t>(t[i])]);
    const auto s = static_cast<Scalar>(sched.sigma[static_cast<std::size_t>(t[i])]);
    const auto off = static_cast<Eigen::Index>(i) * len;
    out.array().segment(off, len) = a * x.array().segment(off, len) + s * eps.array().segment(off, len);
  }
  return out;
}

template <typename Scalar>
NoiseDraw<Scalar> draw_noise(const Shape& target_shape, const NoiseSchedule& sched, Rng& rng) {
  if (target_shape.empty()) throw ShapeError("draw_noise: empty shape");
  NoiseDraw<Scalar> d;
  d.t.resize(static_cast<std::size_t>(target_shape[0]));
  for (auto& t : d.t) t = static_cast<int>(rng.uniform_int(0, sched.T));
  d.eps = Tensor<Scalar>(target_shape);
  for (Eigen::Index i = 0; i < d.eps.array().size(); ++i) d.eps.array()[i] = static_cast<Scalar>(rng.normal());
  return d;
}

template <typename Scalar>
Var<Scalar> diffusion_loss(NoisePredictor<Scalar>& model, Tape<Scalar>& tape, const Tensor<Scalar>& target,
                           const Tensor<Scalar>& condition, const NoiseDraw<Scalar>& draw, const NoiseSchedule& sched) {
  if (condition.rank() != 4 || target.rank() != 4 || condition.dim(0) != target.dim(0) ||
      condition.dim(2) != target.dim(2) || condition.dim(3) != target.dim(3)) {
    throw ShapeError("diffusion_loss: target " + shape_str(target.shape()) + " vs condition " + shape_str(condition.shape()));
  }
  const Tensor<Scalar> noisy = forward_diffuse(target, std::span<const int>(draw.t), draw.eps, sched);
  Var<Scalar> pred = model.predict(tape, tape.constant(noisy), condition, draw.t);
  return mse(pred, tape.constant(draw.eps));
}

template <typename Scalar>
Scalar loss_step(NoisePredictor<Scalar>& model, Tape<Scalar>& tape, const Tensor<Scalar>& target,
                 const Tensor<Scalar>& condition, const NoiseSchedule& sched, Rng& rng) {
  tape.reset();
  const NoiseDraw<Scalar> draw = draw_noise<Scalar>(target.shape(), sched, rng);
  Var<Scalar> loss;
  try {
    loss = diffusion_loss(model, tape, target, condition, draw, sched);
  } catch (const NumericError& e) {
    std::ostringstream msg;
    msg << "loss_step: " << e.what() << "; batch of " << draw.t.size() << " with t =";
    for (int t : draw.t) msg << ' ' << t;
    throw NumericError(msg.str());
  }
  const Scalar value = loss.value()[0];
  if (!std::isfinite(static_cast<double>(value))) {
    throw NumericError("loss_step: non-finite loss for batch " + shape_str(target.shape()));
  }
  tape.backward(loss);
  return value;
}

std::vector<int> sampling_grid(int T, int steps) {
  if (steps < 1) throw ArgumentError("sampler steps must be >= 1, got " + std::to_string(steps));
  if (steps > T) throw ArgumentError("sampler steps " + std::to_string(steps) + " exceed T = " + std::to_string(T));
  std::vector<int> grid(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    // Integer arithmetic keeps the grid exact: T, T - T/steps, ...
    grid[static_cast<std::size_t>(i)] = static_cast<int>((static_cast<std::int64_t>(steps - i) * T) / steps);
  }
  return grid;
}

template <typename Scalar>
Tensor<Scalar> ddim_sample(NoisePredictor<Scalar>& model, const Tensor<Scalar>& condition, std::span<const std::uint64_t> seeds,
                           const NoiseSchedule& sched, int steps) {
  const std::vector<int> grid = sampling_grid(sched.T, steps);
  if (condition.rank() != 4 || static_cast<std::size_t>(condition.dim(0)) != seeds.size()) {
    throw ShapeError("ddim_sample: condition " + shape_str(condition.shape()) + " for " + std::to_string(seeds.size()) + " seeds");
  }
  const int n = condition.dim(0);
  const Shape shape{n, kImageChannels, condition.dim(2), condition.dim(3)};
  Tensor<Scalar> x(shape);
  const auto len = static_cast<Eigen::Index>(x.size() / static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(seeds[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < len; ++j) x.array()[i * len + j] = static_cast<Scalar>(rng.normal());
  }

  Tape<Scalar> tape;
  tape.set_grad_enabled(false);
  Tensor<Scalar> x0(shape);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int t = grid[k];
    const int t_next = k + 1 < grid.size() ? grid[k + 1] : 0;
    tape.reset();
    const std::vector<int> ts(static_cast<std::size_t>(n), t);
    const Tensor<Scalar> eps = model.predict(tape, tape.constant(x), condition, ts).value();
    const double a = sched.alpha[static_cast<std::size_t>(t)];
    const double s = sched.sigma[static_cast<std::size_t>(t)];
    const double a_next = sched.alpha[static_cast<std::size_t>(t_next)];
    const double s_next = sched.sigma[static_cast<std::size_t>(t_next)];
    for (Eigen::Index j = 0; j < x.array().size(); ++j) {
      const double e = static_cast<double>(eps.array()[j]);
      const double pred = std::clamp((static_cast<double>(x.array()[j]) - s * e) / a, -1.0, 1.0);
      x0.array()[j] = static_cast<Scalar>(pred);
      x.array()[j] = static_cast<Scalar>(a_next * pred + s_next * e);
    }
  }
  return x0;
}

Tensor<float> edit_condition(std::span<const ImageBuffer> images, std::span<const MaskBuffer> masks) {
  if (images.size() != masks.size()) throw ShapeError("edit_condition: image and mask counts differ");
  for (std::size_t i = 0; i < images.size(); ++i) require_same_dims(images[i], masks[i], "edit_condition");
  return make_edit_condition(images_to_tensor(images), masks_to_tensor(masks));
}

std::vector<ImageBuffer> sample_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> conditions,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps, int batch) {
  if (conditions.size() != masks.size() || conditions.size() != seeds.size()) {
    throw ShapeError("sample_batch: conditions, masks and seeds must have equal counts");
  }
  std::vector<ImageBuffer> out;
  out.reserve(conditions.size());
  const auto b = static_cast<std::size_t>(std::max(1, batch));
  for (std::size_t start = 0; start < conditions.size(); start += b) {
    const std::size_t count = std::min(b, conditions.size() - start);
    const Tensor<float> cond = model.condition_channels() == 0
                                   ? Tensor<float>({static_cast<int>(count), 0, conditions[start].height(), conditions[start].width()})
                                   : edit_condition(conditions.subspan(start, count), masks.subspan(start, count));
    auto images = tensor_to_images(ddim_sample(model, cond, seeds.subspan(start, count), sched, steps));
    for (auto& img : images) out.push_back(std::move(img));
  }
  return out;
}

ImageBuffer sample(NoisePredictor<float>& model, const ImageBuffer& condition, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps) {
  return sample_batch(model, std::span(&condition, 1), std::span(&mask, 1), sched, std::span(&seed, 1), steps, 1).front();
}

#define CFEDIT_INSTANTIATE_DIFFUSION(S)                                                                              \
  template Tensor<S> forward_diffuse(const Tensor<S>&, int, const Tensor<S>&, const NoiseSchedule&);                 \
  template Tensor<S> forward_diffuse(const Tensor<S>&, std::span<const int>, const Tensor<S>&, const NoiseSchedule&); \
  template NoiseDraw<S> draw_noise(const Shape&, const NoiseSchedule&, Rng&);                                        \
  template Var<S> diffusion_loss(NoisePredictor<S>&, Tape<S>&, const Tensor<S>&, const Tensor<S>&, const NoiseDraw<S>&, \
                                 const NoiseSchedule&);                                                              \
  template S loss_step(NoisePredictor<S>&, Tape<S>&, const Tensor<S>&, const Tensor<S>&, const NoiseSchedule&, Rng&); \
  template Tensor<S> ddim_sample(NoisePredictor<S>&, const Tensor<S>&, std::span<const std::uint64_t>,               \
                                 const NoiseSchedule&, int);

CFEDIT_INSTANTIATE_DIFFUSION(float)
CFEDIT_INSTANTIATE_DIFFUSION(double)

}  // namespace cfedit

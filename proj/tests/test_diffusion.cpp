// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfedit/diffusion.hpp"
#include "support/gradcheck.hpp"
#include "support/stub_model.hpp"

using namespace cfedit;
using cfedit::testing::StubModel;

namespace {

// cos^2 written as (1 + cos 2x) / 2 in long double, independent of the library.
long double alpha_bar_oracle(int t, int T) {
  const long double s = 0.008L;
  auto f = [&](long double tt) { return (1.0L + std::cos(2.0L * (tt / T + s) / (1.0L + s) * std::numbers::pi_v<long double> / 2.0L)) / 2.0L; };
  return f(t) / f(0);
}

DenoiserConfig tiny_config(int in_channels = kImageChannels + kEditConditionChannels) {
  DenoiserConfig cfg;
  cfg.in_channels = in_channels;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2};
  cfg.timesteps = 100;
  cfg.init_seed = 12;
  return cfg;
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("schedule endpoints and invariants") {
  const NoiseSchedule s = make_schedule(1000);
  REQUIRE(s.alpha.size() == 1001);
  CHECK(s.alpha[0] == 1.0);
  CHECK(s.sigma[0] == 0.0);
  CHECK(s.alpha[1000] <= 1e-3);
  for (int t = 0; t <= 1000; ++t) {
    CHECK(std::abs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0) <= 1e-6);
    if (t > 0) {
      CHECK(s.alpha[t] < s.alpha[t - 1]);
      CHECK(s.sigma[t] > s.sigma[t - 1]);
    }
  }
  CHECK_THROWS_AS(make_schedule(1), ArgumentError);
}

TEST_CASE("alpha at t = 500 matches an independent evaluation") {
  const NoiseSchedule s = make_schedule(1000);
  const long double want = std::sqrt(alpha_bar_oracle(500, 1000));
  CHECK(std::abs(static_cast<long double>(s.alpha[500]) - want) < 1e-9L);
  CHECK(std::abs(cosine_alpha_bar(250, 1000) - static_cast<double>(alpha_bar_oracle(250, 1000))) < 1e-9);
}

TEST_CASE("forward_diffuse endpoints and pointwise values") {
  const NoiseSchedule s = make_schedule(1000);
  Rng rng(1);
  const auto x = cfedit::testing::random_tensor({2, 3, 4, 4}, rng).cast<float>();
  Tensor<float> xu = x;
  xu.array() = xu.array().max(-1.0f).min(1.0f);
  const auto eps = cfedit::testing::random_tensor({2, 3, 4, 4}, rng).cast<float>();
  CHECK(forward_diffuse(x, 0, eps, s) == x);
  const auto end = forward_diffuse(xu, 1000, eps, s);
  CHECK((end.array() - eps.array()).abs().maxCoeff() <= 1e-3f);
  const auto mid = forward_diffuse(x, 321, eps, s);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float want = static_cast<float>(s.alpha[321]) * x[i] + static_cast<float>(s.sigma[321]) * eps[i];
    CHECK(mid[i] == want);
  }
  const std::vector<int> ts = {0, 321};
  const auto per = forward_diffuse(x, std::span<const int>(ts), eps, s);
  for (std::size_t i = 0; i < x.size() / 2; ++i) CHECK(per[i] == x[i]);
  for (std::size_t i = x.size() / 2; i < x.size(); ++i) CHECK(per[i] == mid[i]);
  CHECK_THROWS_AS(forward_diffuse(x, 1001, eps, s), ArgumentError);
}

TEST_CASE("forward process variance at x = 0") {
  const NoiseSchedule s = make_schedule(1000);
  Rng rng(2024);
  const auto draw = draw_noise<double>({10000, 1, 1, 1}, s, rng);
  const Tensor<double> zero({10000, 1, 1, 1});
  for (int t : {100, 500, 900}) {
    const auto out = forward_diffuse(zero, t, draw.eps, s);
    const double mean = out.array().mean();
    const double var = (out.array() - mean).square().sum() / (out.size() - 1);
    const double s2 = s.sigma[t] * s.sigma[t];
    CHECK(var >= 0.95 * s2);
    CHECK(var <= 1.05 * s2);
  }
}

TEST_CASE("timesteps are drawn from the whole range") {
  const NoiseSchedule s = make_schedule(10);
  Rng rng(3);
  std::vector<int> seen(11, 0);
  for (int k = 0; k < 200; ++k)
    for (int t : draw_noise<float>({8, 1, 1, 1}, s, rng).t) seen[t]++;
  for (int c : seen) CHECK(c > 0);
}

TEST_CASE("loss with an oracle noise predictor") {
  const NoiseSchedule s = make_schedule(1000);
  Rng rng(4);
  const auto target = cfedit::testing::random_tensor({3, 3, 4, 4}, rng).cast<float>();
  const Tensor<float> cond({3, 4, 4, 4});
  const auto draw = draw_noise<float>(target.shape(), s, rng);
  StubModel<float> perfect([&](const Tensor<float>&, std::span<const int>) { return draw.eps; }, 4);
  StubModel<float> offset([&](const Tensor<float>&, std::span<const int>) {
    Tensor<float> e = draw.eps;
    e.array() += 0.1f;
    return e;
  }, 4);
  Tape<float> tape;
  CHECK(diffusion_loss(perfect, tape, target, cond, draw, s).value()[0] == 0.0f);
  CHECK(diffusion_loss(offset, tape, target, cond, draw, s).value()[0] == doctest::Approx(0.01).epsilon(1e-5));
}

TEST_CASE("loss of a real model is bit-reproducible") {
  const NoiseSchedule s = make_schedule(100);
  Rng data(5);
  const auto target = cfedit::testing::random_tensor({2, 3, 8, 8}, data).cast<float>();
  const auto cond = cfedit::testing::random_tensor({2, 4, 8, 8}, data).cast<float>();
  auto run = [&] {
    Denoiser<float> model(tiny_config());
    Tape<float> tape;
    Rng rng(77);
    return loss_step(model, tape, target, cond, s, rng);
  };
  const float a = run();
  CHECK(a == run());
  CHECK(std::isfinite(a));
}

TEST_CASE("sampling grid") {
  CHECK(sampling_grid(1000, 1) == std::vector<int>{1000});
  CHECK(sampling_grid(1000, 4) == std::vector<int>{1000, 750, 500, 250});
  const auto g = sampling_grid(1000, 50);
  CHECK(g.front() == 1000);
  CHECK(g.back() == 20);
  CHECK_THROWS_AS(sampling_grid(10, 0), ArgumentError);
  CHECK_THROWS_AS(sampling_grid(10, 11), ArgumentError);
}

TEST_CASE("one ddim step returns the clamped one-shot clean estimate") {
  const NoiseSchedule s = make_schedule(1000);
  StubModel<double> half([](const Tensor<double>& x, std::span<const int>) {
    Tensor<double> e = x;
    e.array() *= 0.999;
    return e;
  }, 0);
  const std::vector<std::uint64_t> seeds = {1, 2};
  const auto out = ddim_sample<double>(half, Tensor<double>({2, 0, 4, 4}), seeds, s, 1);
  for (int i = 0; i < 2; ++i) {
    Rng rng(seeds[i]);
    for (int j = 0; j < 48; ++j) {
      const double x = rng.normal();
      const double want = std::clamp((x - s.sigma[1000] * 0.999 * x) / s.alpha[1000], -1.0, 1.0);
      CHECK(out[i * 48 + j] == want);
    }
  }
}

TEST_CASE("ddim recovers the clean image a perfect predictor implies") {
  const NoiseSchedule s = make_schedule(1000);
  // eps_hat = (x - alpha k) / sigma makes the implied x0 exactly k. At t = T
  // alpha is ~1e-17 and the first estimate is pure round-off; the following
  // steps recover k.
  auto oracle = [&](double k) {
    return StubModel<double>([&s, k](const Tensor<double>& x, std::span<const int> t) {
      Tensor<double> e(x.shape());
      e.array() = (x.array() - s.alpha[t[0]] * k) / s.sigma[t[0]];
      return e;
    }, 0);
  };
  const std::vector<std::uint64_t> seeds = {1, 2};
  const Tensor<double> cond({2, 0, 4, 4});
  for (int steps : {2, 7, 50}) {
    auto m = oracle(0.3);
    CHECK((ddim_sample<double>(m, cond, seeds, s, steps).array() - 0.3).abs().maxCoeff() < 1e-9);
    auto big = oracle(2.0);
    CHECK((ddim_sample<double>(big, cond, seeds, s, steps).array() == 1.0).all());
  }
}

TEST_CASE("sampling is deterministic and independent of batching") {
  const NoiseSchedule s = make_schedule(100);
  Denoiser<float> model(tiny_config());
  std::vector<ImageBuffer> imgs;
  std::vector<MaskBuffer> masks;
  for (int i = 0; i < 3; ++i) {
    imgs.emplace_back(8, 8, 0.2f * static_cast<float>(i + 1));
    masks.emplace_back(8, 8, static_cast<std::uint8_t>(i % 2));
  }
  const std::vector<std::uint64_t> seeds = {10, 11, 12};
  const auto all = sample_batch(model, imgs, masks, s, seeds, 5, 3);
  const auto one = sample_batch(model, imgs, masks, s, seeds, 5, 1);
  for (int i = 0; i < 3; ++i) CHECK(all[i] == one[i]);
  CHECK(sample(model, imgs[1], masks[1], s, 11, 5) == all[1]);
  CHECK_FALSE(sample(model, imgs[1], masks[1], s, 99, 5) == all[1]);
}

TEST_CASE("zero-init channel expansion") {
  Denoiser<float> base(tiny_config(kImageChannels));
  Denoiser<float> wide = base.expand_input_channels_zero_init(kEditConditionChannels);
  CHECK(wide.config().in_channels == 7);
  CHECK(wide.condition_channels() == 4);
  CHECK(wide.parameter(Denoiser<float>::kStemWeight).value.shape() == Shape{8, 7, 3, 3});

  Rng rng(6);
  const auto noisy = cfedit::testing::random_tensor({2, 3, 8, 8}, rng).cast<float>();
  const auto cond_a = cfedit::testing::random_tensor({2, 4, 8, 8}, rng).cast<float>();
  auto cond_b = cfedit::testing::random_tensor({2, 4, 8, 8}, rng).cast<float>();
  cond_b.array() *= 100.0f;
  const std::vector<int> t = {5, 90};
  Tape<float> tape;
  const auto ya = wide.predict(tape, tape.constant(noisy), cond_a, t).value();
  const auto yb = wide.predict(tape, tape.constant(noisy), cond_b, t).value();
  const auto y0 = base.predict(tape, tape.constant(noisy), Tensor<float>({2, 0, 8, 8}), t).value();
  CHECK(ya == yb);
  CHECK((ya.array() - y0.array()).abs().maxCoeff() < 1e-5f);

  SUBCASE("new channels receive gradient") {
    const NoiseSchedule s = make_schedule(100);
    Tape<float> train;
    Rng noise(7);
    wide.zero_grad();
    loss_step(wide, train, noisy, cond_a, s, noise);
    const auto& g = wide.parameter(Denoiser<float>::kStemWeight).grad;
    double new_norm = 0;
    for (int o = 0; o < 8; ++o)
      for (int c = 3; c < 7; ++c)
        for (int k = 0; k < 9; ++k) new_norm += std::abs(g[(o * 7 + c) * 9 + k]);
    CHECK(new_norm > 0);
  }
}

}  // TEST_SUITE

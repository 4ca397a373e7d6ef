// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "cfedit/adam.hpp"
#include "cfedit/checkpoint.hpp"
#include "cfedit/denoiser.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpdir.hpp"

using namespace cfedit;
using cfedit::testing::random_tensor;

namespace {

// Six nested loops, written independently of the im2col path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, int stride, int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> y({n, o, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0;
          for (int ic = 0; ic < c; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += x.at(b, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          y.at(b, oc, oy, ox) = acc;
        }
  return y;
}

template <typename S>
Tensor<S> run_conv(const Tensor<S>& x, const Tensor<S>& w, int stride, int pad) {
  Tape<S> tape;
  return conv2d(tape.constant(x), tape.constant(w), stride, pad).value();
}

}  // namespace

TEST_SUITE("tensor-core") {

TEST_CASE("conv2d: ones through a 1x1 kernel of 2") {
  const auto y = run_conv(Tensor<float>({1, 1, 3, 3}, 1.0f), Tensor<float>({1, 1, 1, 1}, 2.0f), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK((y.array() == 2.0f).all());
}

TEST_CASE("conv2d: averaging kernel gives the neighbourhood mean") {
  Tensor<double> x({1, 1, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i * i % 7);
  const auto y = run_conv(x, Tensor<double>({1, 1, 3, 3}, 1.0 / 9.0), 1, 1);
  double mean = 0;
  for (int dy = 0; dy < 3; ++dy)
    for (int dx = 0; dx < 3; ++dx) mean += x.at(0, 0, dy, dx + 1) / 9.0;
  CHECK(y.at(0, 0, 1, 2) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("conv2d matches a naive six-loop convolution") {
  Rng rng(11);
  const auto x = random_tensor({2, 3, 8, 8}, rng);
  const auto w = random_tensor({4, 3, 3, 3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      const auto want = naive_conv(x, w, stride, pad);
      const auto got = run_conv(x.cast<float>(), w.cast<float>(), stride, pad);
      REQUIRE(got.shape() == want.shape());
      CHECK((got.array().cast<double>() - want.array()).abs().maxCoeff() < 1e-5);
      // The library's own loop reference agrees too.
      const auto ref = conv2d_reference<double>(x, w, nullptr, stride, pad);
      CHECK((ref.array() - want.array()).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Tape<float> tape;
  CHECK_THROWS_AS(conv2d(tape.constant(Tensor<float>({1, 2, 4, 4})), tape.constant(Tensor<float>({1, 3, 3, 3})), 1, 1),
                  ShapeError);
}

TEST_CASE("group_norm: constant input with unit gain gives zeros") {
  Tape<double> tape;
  const auto y = group_norm(tape.constant(Tensor<double>({2, 4, 3, 3}, 3.5)), 2, tape.constant(Tensor<double>({4}, 1.0)),
                            tape.constant(Tensor<double>({4}, 0.0)));
  CHECK(y.value().array().abs().maxCoeff() == 0.0);
}

TEST_CASE("group_norm: zero gain and bias 5 gives fives") {
  Rng rng(3);
  Tape<double> tape;
  const auto y = group_norm(tape.constant(random_tensor({2, 4, 3, 3}, rng)), 2, tape.constant(Tensor<double>({4}, 0.0)),
                            tape.constant(Tensor<double>({4}, 5.0)));
  CHECK((y.value().array() == 5.0).all());
}

TEST_CASE("group_norm: normalized groups have zero mean and unit variance") {
  Rng rng(5);
  const int n = 3, c = 8, groups = 4, hw = 5;
  Tensor<double> x = random_tensor({n, c, hw, hw}, rng, 4.0);
  x.array() += 2.0;
  Tape<double> tape;
  const auto y = group_norm(tape.constant(x), groups, tape.constant(Tensor<double>({c}, 1.0)),
                            tape.constant(Tensor<double>({c}, 0.0)))
                     .value();
  const int per = (c / groups) * hw * hw;
  for (int b = 0; b < n; ++b) {
    for (int g = 0; g < groups; ++g) {
      const auto seg = y.array().segment((b * groups + g) * per, per);
      const double mu = seg.mean();
      const double var = (seg - mu).square().mean();
      CHECK(std::abs(mu) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("sum of squares has gradient 2w") {
  Parameter<double> w("w", Tensor<double>({3}, {1.0, -2.0, 3.0}));
  Tape<double> tape;
  const auto v = tape.parameter(w);
  tape.backward(sum(mul(v, v)));
  CHECK(w.grad[0] == 2.0);
  CHECK(w.grad[1] == -4.0);
  CHECK(w.grad[2] == 6.0);
}

TEST_CASE("mse of equal tensors has zero gradient") {
  Rng rng(2);
  Parameter<double> a("a", random_tensor({2, 3}, rng));
  Tape<double> tape;
  tape.backward(mse(tape.parameter(a), tape.constant(a.value)));
  CHECK(a.grad.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("every op passes the finite-difference oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (auto& op : cfedit::testing::op_suite(seed)) {
      const auto r = cfedit::testing::gradcheck(op.params, op.graph, seed + 100);
      INFO(op.name << " seed " << seed << ": " << r.worst);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("denoiser gradients in double pass the finite-difference oracle") {
  DenoiserConfig cfg;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2};
  cfg.timesteps = 50;
  cfg.init_seed = 4;
  Denoiser<double> model(cfg);
  Rng rng(8);
  // Non-trivial norms and biases so no path is identically zero.
  for (auto& p : model.parameters()) p.value.array() += 0.05 * random_tensor(p.value.shape(), rng).array();
  const Tensor<double> noisy = random_tensor({2, 3, 4, 4}, rng);
  const Tensor<double> cond = random_tensor({2, 4, 4, 4}, rng);
  const std::vector<int> t = {3, 40};
  const Tensor<double> proj = random_tensor({2, 3, 4, 4}, rng);
  auto loss = [&](Tape<double>& tape) { return sum(mul(model.predict(tape, tape.constant(noisy), cond, t), tape.constant(proj))); };

  model.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  double worst = 0;
  std::size_t checked = 0;
  for (auto& p : model.parameters()) {
    for (int k = 0; k < 2; ++k) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(p.value.size()) - 1));
      const double orig = p.value[i];
      auto eval = [&](double v) {
        p.value[i] = v;
        Tape<double> tape;
        tape.set_grad_enabled(false);
        return loss(tape).value()[0];
      };
      const double numeric = (eval(orig + 1e-4) - eval(orig - 1e-4)) / 2e-4;
      p.value[i] = orig;
      const double err = cfedit::testing::rel_error(p.grad[i], numeric, 1e-3);
      INFO(p.name << "[" << i << "] analytic " << p.grad[i] << " numeric " << numeric);
      CHECK(err < 1e-3);
      worst = std::max(worst, err);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("linear output does not depend on the batch it is computed in") {
  Rng rng(9);
  const auto x = random_tensor({5, 7}, rng).cast<float>();
  const auto w = random_tensor({6, 7}, rng).cast<float>();
  Tape<float> tape;
  const auto all = linear(tape.constant(x), tape.constant(w), std::nullopt).value();
  Tensor<float> row({1, 7});
  for (int j = 0; j < 7; ++j) row[j] = x[3 * 7 + j];
  const auto one = linear(tape.constant(row), tape.constant(w), std::nullopt).value();
  for (int j = 0; j < 6; ++j) CHECK(one[j] == all[3 * 6 + j]);
}

TEST_CASE("adam: zero gradients only decay the moments") {
  std::vector<Parameter<double>> p{Parameter<double>("w", Tensor<double>({2}, {1.0, -1.0}))};
  auto state = AdamState<double>::for_params(p);
  adam_step<double>(p, state, 0.1);
  CHECK(p[0].value[0] == 1.0);
  CHECK(p[0].value[1] == -1.0);
  CHECK(state.m[0].array().abs().maxCoeff() == 0.0);

  state.m[0].fill(0.5);
  state.v[0].fill(0.25);
  adam_step<double>(p, state, 0.1);
  CHECK(state.m[0][0] == doctest::Approx(0.45));
  CHECK(state.v[0][0] == doctest::Approx(0.24975));
}

TEST_CASE("adam: the first step moves by lr against the gradient sign") {
  std::vector<Parameter<double>> p{Parameter<double>("w", Tensor<double>({3}, {0.0, 0.0, 0.0}))};
  p[0].grad = Tensor<double>({3}, {0.3, -20.0, 1e-3});
  auto state = AdamState<double>::for_params(p);
  adam_step<double>(p, state, 0.01);
  CHECK(p[0].value[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[0].value[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[0].value[2] == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("adam: 200 steps on (w-3)^2 matches the scalar recurrence") {
  std::vector<Parameter<double>> p{Parameter<double>("w", Tensor<double>({1}, {0.0}))};
  auto state = AdamState<double>::for_params(p);
  double w = 0, m = 0, v = 0;
  for (int k = 1; k <= 200; ++k) {
    p[0].grad[0] = 2 * (p[0].value[0] - 3);
    adam_step<double>(p, state, 0.1);
    const double g = 2 * (w - 3);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
  }
  CHECK(std::abs(p[0].value[0] - 3) < 0.05);
  CHECK(p[0].value[0] == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("adam refuses non-finite gradients without touching anything") {
  std::vector<Parameter<float>> p{Parameter<float>("w", Tensor<float>({2}, {1.0f, 2.0f}))};
  p[0].grad[1] = std::numeric_limits<float>::quiet_NaN();
  auto state = AdamState<float>::for_params(p);
  CHECK_THROWS_AS(adam_step<float>(p, state, 0.1f), NumericError);
  CHECK(p[0].value[0] == 1.0f);
  CHECK(state.step == 0);
}

TEST_CASE("checkpoint round trip keeps every bit") {
  cfedit::testing::TempDir dir;
  Rng rng(1);
  std::vector<Parameter<float>> p{Parameter<float>("a", random_tensor({2, 3}, rng).cast<float>()),
                                  Parameter<float>("b", random_tensor({4}, rng).cast<float>())};
  auto state = AdamState<float>::for_params(p);
  state.m[1].fill(0.25f);
  state.step = 7;
  save_checkpoint<float>(dir / "x.ckpt", p, &state);
  std::vector<Parameter<float>> q{Parameter<float>("a", Tensor<float>({2, 3})), Parameter<float>("b", Tensor<float>({4}))};
  load_checkpoint<float>(dir / "x.ckpt", q);
  CHECK(q[0].value == p[0].value);
  CHECK(q[1].value == p[1].value);
  std::vector<Parameter<float>> wrong{Parameter<float>("a", Tensor<float>({3, 2})), Parameter<float>("b", Tensor<float>({4}))};
  CHECK_THROWS(load_checkpoint<float>(dir / "x.ckpt", wrong));
}

}  // TEST_SUITE

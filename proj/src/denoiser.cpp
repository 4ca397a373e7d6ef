// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/denoiser.hpp"

#include <cmath>
#include <numeric>

#include "cfedit/rng.hpp"

namespace cfedit {

int norm_groups(int channels) {
  if (channels < 8) return channels;
  return std::gcd(channels, 8);
}

template <typename Scalar>
Denoiser<Scalar>::Denoiser(DenoiserConfig config) : config_(std::move(config)) {
  if (config_.in_channels < kImageChannels) throw ArgumentError("denoiser: in_channels must be >= 3");
  if (config_.base_channels < 1 || config_.base_channels % 2 != 0) {
    throw ArgumentError("denoiser: base_channels must be a positive even number");
  }
  if (config_.channel_mult.empty()) throw ArgumentError("denoiser: channel_mult must not be empty");
  if (config_.timesteps < 1) throw ArgumentError("denoiser: timesteps must be >= 1");
  build();
}

template <typename Scalar>
Parameter<Scalar>& Denoiser<Scalar>::add_param(const std::string& name, Shape shape, Scalar bound, std::uint64_t& counter) {
  Tensor<Scalar> value(std::move(shape));
  Rng rng(mix_seed(config_.init_seed, counter++));
  if (bound != Scalar(0)) {
    for (Scalar& v : value.span()) v = static_cast<Scalar>(rng.uniform(-1.0, 1.0)) * bound;
  }
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

template <typename Scalar>
void Denoiser<Scalar>::make_conv(const std::string& prefix, int cin, int cout, int k, std::uint64_t& counter) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(cin * k * k));
  add_param(prefix + ".w", {cout, cin, k, k}, bound, counter);
  add_param(prefix + ".b", {cout}, Scalar(0), counter);
}

template <typename Scalar>
void Denoiser<Scalar>::make_norm(const std::string& prefix, int channels, std::uint64_t& counter) {
  add_param(prefix + ".g", {channels}, Scalar(0), counter).value.fill(Scalar(1));
  add_param(prefix + ".b", {channels}, Scalar(0), counter);
}

template <typename Scalar>
void Denoiser<Scalar>::make_res_block(const std::string& prefix, int cin, int cout, std::uint64_t& counter) {
  make_norm(prefix + ".n1", cin, counter);
  make_conv(prefix + ".c1", cin, cout, 3, counter);
  add_param(prefix + ".t.w", {cout, temb_dim()}, Scalar(1) / std::sqrt(static_cast<Scalar>(temb_dim())), counter);
  add_param(prefix + ".t.b", {cout}, Scalar(0), counter);
  make_norm(prefix + ".n2", cout, counter);
  make_conv(prefix + ".c2", cout, cout, 3, counter);
  if (cin != cout) make_conv(prefix + ".skip", cin, cout, 1, counter);
}

template <typename Scalar>
void Denoiser<Scalar>::build() {
  params_.clear();
  index_.clear();
  params_.reserve(256);
  std::uint64_t counter = 0;
  const int e = embed_dim();
  const int te = temb_dim();
  add_param("time.w1", {te, e}, Scalar(1) / std::sqrt(static_cast<Scalar>(e)), counter);
  add_param("time.b1", {te}, Scalar(0), counter);
  add_param("time.w2", {te, te}, Scalar(1) / std::sqrt(static_cast<Scalar>(te)), counter);
  add_param("time.b2", {te}, Scalar(0), counter);

  const int levels = config_.levels();
  auto width = [&](int level) { return config_.base_channels * config_.channel_mult[static_cast<std::size_t>(level)]; };
  make_conv("stem", config_.in_channels, width(0), 3, counter);
  int ch = width(0);
  for (int l = 0; l < levels; ++l) {
    make_res_block("down" + std::to_string(l), ch, width(l), counter);
    ch = width(l);
    if (l + 1 < levels) make_conv("down" + std::to_string(l) + ".ds", ch, ch, 3, counter);
  }
  make_res_block("mid", ch, ch, counter);
  for (int l = levels - 2; l >= 0; --l) {
    make_conv("up" + std::to_string(l) + ".us", ch, width(l), 3, counter);
    make_res_block("up" + std::to_string(l), 2 * width(l), width(l), counter);
    ch = width(l);
  }
  make_norm("out.n", ch, counter);
  make_conv("out", ch, config_.out_channels, 3, counter);

  const int half = e / 2;
  time_table_ = Tensor<Scalar>({config_.timesteps + 1, e});
  for (int t = 0; t <= config_.timesteps; ++t) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      time_table_[static_cast<std::size_t>(t) * e + i] = static_cast<Scalar>(std::sin(t * freq));
      time_table_[static_cast<std::size_t>(t) * e + half + i] = static_cast<Scalar>(std::cos(t * freq));
    }
  }
}

template <typename Scalar>
std::size_t Denoiser<Scalar>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

template <typename Scalar>
Parameter<Scalar>& Denoiser<Scalar>::parameter(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("denoiser: no parameter named '" + name + "'");
  return params_[it->second];
}

template <typename Scalar>
const Parameter<Scalar>& Denoiser<Scalar>::parameter(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("denoiser: no parameter named '" + name + "'");
  return params_[it->second];
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::param(Tape<Scalar>& tape, const std::string& name) {
  return tape.parameter(parameter(name));
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::norm_act(Tape<Scalar>& tape, const std::string& prefix, Var<Scalar> x) {
  const int channels = x.shape()[1];
  return silu(group_norm(x, norm_groups(channels), param(tape, prefix + ".g"), param(tape, prefix + ".b")));
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::res_block(Tape<Scalar>& tape, const std::string& prefix, Var<Scalar> x, Var<Scalar> temb,
                                        int cin, int cout) {
  Var<Scalar> h = conv2d(norm_act(tape, prefix + ".n1", x), param(tape, prefix + ".c1.w"), param(tape, prefix + ".c1.b"), 1, 1);
  h = add_channelwise(h, linear(temb, param(tape, prefix + ".t.w"), param(tape, prefix + ".t.b")));
  h = conv2d(norm_act(tape, prefix + ".n2", h), param(tape, prefix + ".c2.w"), param(tape, prefix + ".c2.b"), 1, 1);
  const Var<Scalar> skip =
      cin == cout ? x : conv2d(x, param(tape, prefix + ".skip.w"), param(tape, prefix + ".skip.b"), 1, 0);
  return skip + h;
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::forward(Tape<Scalar>& tape, Var<Scalar> input, std::span<const int> timesteps) {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    throw ShapeError("denoiser: expected (N, " + std::to_string(config_.in_channels) + ", H, W) input, got " + shape_str(s));
  }
  const int mult = config_.spatial_multiple();
  if (s[2] % mult != 0 || s[3] % mult != 0) {
    throw ShapeError("denoiser: spatial dims " + shape_str(s) + " must be divisible by " + std::to_string(mult));
  }
  if (timesteps.size() != static_cast<std::size_t>(s[0])) {
    throw ShapeError("denoiser: " + std::to_string(timesteps.size()) + " timesteps for batch of " + std::to_string(s[0]));
  }

  const int e = embed_dim();
  Tensor<Scalar> emb({s[0], e});
  for (int i = 0; i < s[0]; ++i) {
    const int t = timesteps[static_cast<std::size_t>(i)];
    if (t < 0 || t > config_.timesteps) throw ArgumentError("denoiser: timestep " + std::to_string(t) + " out of range");
    emb.array().segment(static_cast<Eigen::Index>(i) * e, e) = time_table_.array().segment(static_cast<Eigen::Index>(t) * e, e);
  }
  Var<Scalar> temb = linear(tape.constant(std::move(emb)), param(tape, "time.w1"), param(tape, "time.b1"));
  temb = silu(linear(silu(temb), param(tape, "time.w2"), param(tape, "time.b2")));

  const int levels = config_.levels();
  auto width = [&](int level) { return config_.base_channels * config_.channel_mult[static_cast<std::size_t>(level)]; };

  Var<Scalar> h = conv2d(input, param(tape, "stem.w"), param(tape, "stem.b"), 1, 1);
  std::vector<Var<Scalar>> skips;
  int ch = width(0);
  for (int l = 0; l < levels; ++l) {
    const std::string name = "down" + std::to_string(l);
    h = res_block(tape, name, h, temb, ch, width(l));
    ch = width(l);
    if (l + 1 < levels) {
      skips.push_back(h);
      h = conv2d(h, param(tape, name + ".ds.w"), param(tape, name + ".ds.b"), 2, 1);
    }
  }
  h = res_block(tape, "mid", h, temb, ch, ch);
  for (int l = levels - 2; l >= 0; --l) {
    const std::string name = "up" + std::to_string(l);
    h = conv2d(upsample2x(h), param(tape, name + ".us.w"), param(tape, name + ".us.b"), 1, 1);
    h = concat_channels(h, skips[static_cast<std::size_t>(l)]);
    h = res_block(tape, name, h, temb, 2 * width(l), width(l));
    ch = width(l);
  }
  return conv2d(norm_act(tape, "out.n", h), param(tape, "out.w"), param(tape, "out.b"), 1, 1);
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::predict(Tape<Scalar>& tape, Var<Scalar> noisy, const Tensor<Scalar>& condition,
                                      std::span<const int> timesteps) {
  const int cond_ch = config_.condition_channels();
  if (cond_ch == 0) return forward(tape, noisy, timesteps);
  if (condition.rank() != 4 || condition.dim(1) != cond_ch) {
    throw ShapeError("denoiser: expected " + std::to_string(cond_ch) + " condition channels, got " + shape_str(condition.shape()));
  }
  return forward(tape, concat_channels(noisy, tape.constant(condition)), timesteps);
}

template <typename Scalar>
Denoiser<Scalar> Denoiser<Scalar>::expand_input_channels_zero_init(int extra) const {
  if (extra < 1) throw ArgumentError("expand_input_channels_zero_init: extra must be >= 1");
  Denoiser expanded = *this;
  expanded.config_.in_channels += extra;
  Parameter<Scalar>& stem = expanded.parameter(kStemWeight);
  const Tensor<Scalar>& old = stem.value;
  const int out = old.dim(0);
  const int cin = old.dim(1);
  const int k = old.dim(2);
  Tensor<Scalar> grown({out, cin + extra, k, k});
  const auto plane = static_cast<Eigen::Index>(k) * k;
  for (int o = 0; o < out; ++o) {
    grown.array().segment(o * (cin + extra) * plane, cin * plane) = old.array().segment(o * cin * plane, cin * plane);
  }
  stem = Parameter<Scalar>(stem.name, std::move(grown));
  return expanded;
}

template <typename Scalar>
void Denoiser<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename Scalar>
Tensor<Scalar> make_edit_condition(const Tensor<Scalar>& condition_image, const Tensor<Scalar>& mask) {
  const Shape& si = condition_image.shape();
  const Shape& sm = mask.shape();
  if (si.size() != 4 || si[1] != kImageChannels || sm.size() != 4 || sm[1] != 1 || si[0] != sm[0] || si[2] != sm[2] ||
      si[3] != sm[3]) {
    throw ShapeError("edit condition: image " + shape_str(si) + " and mask " + shape_str(sm) + " are incompatible");
  }
  const int n = si[0];
  const auto li = static_cast<Eigen::Index>(condition_image.size() / n);
  const auto lm = static_cast<Eigen::Index>(mask.size() / n);
  Tensor<Scalar> out({n, kEditConditionChannels, si[2], si[3]});
  for (int i = 0; i < n; ++i) {
    out.array().segment(i * (li + lm), li) = condition_image.array().segment(i * li, li);
    out.array().segment(i * (li + lm) + li, lm) = mask.array().segment(i * lm, lm);
  }
  return out;
}

template class Denoiser<float>;
template class Denoiser<double>;
template Tensor<float> make_edit_condition(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> make_edit_condition(const Tensor<double>&, const Tensor<double>&);

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfedit/ops.hpp"

namespace cfedit {

/// Channel layout of the network input: noisy image (3) followed by the
/// conditioning planes (condition image 3 + mask 1 for editing models).
inline constexpr int kImageChannels = 3;
inline constexpr int kEditConditionChannels = 4;

struct DenoiserConfig {
  int in_channels = kImageChannels + kEditConditionChannels;
  int out_channels = kImageChannels;
  int base_channels = 32;
  std::vector<int> channel_mult = {1, 2, 4};
  int timesteps = 1000;
  std::uint64_t init_seed = 0;

  int condition_channels() const { return in_channels - kImageChannels; }
  int levels() const { return static_cast<int>(channel_mult.size()); }
  /// Spatial dims must be divisible by this.
  int spatial_multiple() const { return 1 << (levels() - 1); }
};

/// Anything that predicts the injected noise from (noisy image, condition, t).
template <typename Scalar>
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  /// noisy: (N,3,H,W) on `tape`; condition: (N, condition_channels, H, W).
  virtual Var<Scalar> predict(Tape<Scalar>& tape, Var<Scalar> noisy, const Tensor<Scalar>& condition,
                              std::span<const int> timesteps) = 0;

  virtual std::span<Parameter<Scalar>> parameters() = 0;
  virtual int condition_channels() const = 0;
};

/// Encoder-decoder conv net with skip connections, group norm + SiLU residual
/// blocks and a sinusoidal timestep embedding injected per block.
template <typename Scalar>
class Denoiser final : public NoisePredictor<Scalar> {
 public:
  explicit Denoiser(DenoiserConfig config);

  Var<Scalar> predict(Tape<Scalar>& tape, Var<Scalar> noisy, const Tensor<Scalar>& condition,
                      std::span<const int> timesteps) override;

  /// Full network on a pre-concatenated (N, in_channels, H, W) input.
  Var<Scalar> forward(Tape<Scalar>& tape, Var<Scalar> input, std::span<const int> timesteps);

  std::span<Parameter<Scalar>> parameters() override { return params_; }
  std::span<const Parameter<Scalar>> parameters() const { return params_; }
  int condition_channels() const override { return config_.condition_channels(); }

  const DenoiserConfig& config() const noexcept { return config_; }
  std::size_t parameter_count() const;
  Parameter<Scalar>& parameter(const std::string& name);
  const Parameter<Scalar>& parameter(const std::string& name) const;

  /// (T+1, embed_dim) sinusoidal table indexed by integer timestep.
  const Tensor<Scalar>& time_table() const noexcept { return time_table_; }

  /// Name of the first convolution, the one that sees the raw input channels.
  static constexpr const char* kStemWeight = "stem.w";

  /// Copy with `extra` input channels appended to the stem; their weights are
  /// exactly zero and every other parameter is bit-identical.
  Denoiser expand_input_channels_zero_init(int extra) const;

  void zero_grad();

 private:
  Parameter<Scalar>& add_param(const std::string& name, Shape shape, Scalar bound, std::uint64_t& counter);
  Var<Scalar> param(Tape<Scalar>& tape, const std::string& name);
  Var<Scalar> norm_act(Tape<Scalar>& tape, const std::string& prefix, Var<Scalar> x);
  Var<Scalar> res_block(Tape<Scalar>& tape, const std::string& prefix, Var<Scalar> x, Var<Scalar> temb, int cin, int cout);
  void build();
  void make_res_block(const std::string& prefix, int cin, int cout, std::uint64_t& counter);
  void make_conv(const std::string& prefix, int cin, int cout, int k, std::uint64_t& counter);
  void make_norm(const std::string& prefix, int channels, std::uint64_t& counter);
  int embed_dim() const { return config_.base_channels; }
  int temb_dim() const { return 4 * config_.base_channels; }

  DenoiserConfig config_;
  std::vector<Parameter<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor<Scalar> time_table_;
};

/// Group count for a channel width: 8 when possible, else the channel count.
int norm_groups(int channels);

/// Concatenated (condition image, mask) planes for an edit model.
template <typename Scalar>
Tensor<Scalar> make_edit_condition(const Tensor<Scalar>& condition_image, const Tensor<Scalar>& mask);

extern template class Denoiser<float>;
extern template class Denoiser<double>;
extern template Tensor<float> make_edit_condition(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> make_edit_condition(const Tensor<double>&, const Tensor<double>&);

}  // namespace cfedit

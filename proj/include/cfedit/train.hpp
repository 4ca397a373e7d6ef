// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfedit/adam.hpp"
#include "cfedit/diffusion.hpp"

namespace cfedit {

struct TrainConfig {
  int steps = 20000;
  int batch = 16;
  double lr = 1e-4;
  /// Negative keeps lr constant; otherwise cosine decay from lr to lr_final.
  double lr_final = -1.0;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  std::string checkpoint_prefix = "model";
  std::uint64_t seed = 0;
  // Abort when the loss stays above factor x (mean of the first `reference`
  // losses) for `patience` consecutive steps.
  double divergence_factor = 10.0;
  int divergence_patience = 500;
  int divergence_reference = 10;
  /// Progress line on stderr every this many steps; 0 is silent.
  int log_every = 0;
};

/// One supervised example in image space: the network learns to produce
/// `target` from (`condition`, `mask`).
struct TrainExample {
  ImageBuffer target;
  ImageBuffer condition;
  MaskBuffer mask;
};

/// Builds example `index`; `rng` is private to this (step, slot) so sources
/// can randomize (random masks, empty-mask pairs) reproducibly.
using ExampleSource = std::function<TrainExample(std::size_t index, Rng& rng)>;

struct TrainResult {
  std::vector<float> losses;
  std::vector<double> lrs;
  std::filesystem::path checkpoint;  // final checkpoint, empty without out_dir
};

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

double scheduled_lr(const TrainConfig& cfg, int step);

/// Runs cfg.steps optimizer steps over `n_examples` examples in seeded epoch
/// order. With a non-empty `out_dir`, writes <prefix>_loss.csv (step,loss,lr)
/// and <prefix>_step{N}.ckpt checkpoints with JSON sidecars carrying
/// `provenance`.
TrainResult train_denoiser(Denoiser<float>& model, const NoiseSchedule& sched, std::size_t n_examples,
                           const ExampleSource& source, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                           const nlohmann::ordered_json& provenance = nlohmann::ordered_json::object());

// Checkpoint plus sidecar (<ckpt>.json) describing the architecture, the
// schedule and the training lineage.
std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);
void save_denoiser(const std::filesystem::path& ckpt, const Denoiser<float>& model, const AdamState<float>* adam,
                   const nlohmann::ordered_json& provenance, int step);
Denoiser<float> load_denoiser(const std::filesystem::path& ckpt);
/// Highest-step <prefix>_step{N}.ckpt in `dir`; throws IoError when none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& dir, const std::string& prefix);
nlohmann::json read_sidecar(const std::filesystem::path& ckpt);

nlohmann::ordered_json config_json(const DenoiserConfig& cfg);
DenoiserConfig config_from_json(const nlohmann::json& j);

}  // namespace cfedit

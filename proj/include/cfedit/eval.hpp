// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfedit/insertion.hpp"
#include "cfedit/metrics.hpp"
#include "cfedit/removal.hpp"

namespace cfedit {

inline constexpr const char* kMetricNote =
    "ssim_proxy substitutes the DINO/CLIP/LPIPS perceptual columns; all metrics on full images";

struct EvalRow {
  std::string id;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> shadow_region_mae;
  std::optional<double> outside_region_mae;
  std::optional<double> in_mask_mae;
};

struct Aggregate {
  double mean = 0;
  double std = 0;  // population standard deviation
  std::size_t n = 0;
};

/// Mean and std over present values; n = 0 when every row lacks the metric.
Aggregate aggregate(const std::vector<std::optional<double>>& values);

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::string config_hash;
  std::vector<EvalRow> rows;

  Aggregate psnr() const;
  Aggregate ssim() const;
  Aggregate shadow_region_mae() const;
  Aggregate outside_region_mae() const;
  Aggregate in_mask_mae() const;

  nlohmann::ordered_json summary() const;
};

EvalRow evaluate_image(const std::string& id, const ImageBuffer& pred, const ImageBuffer& truth, const MaskBuffer& mask,
                       const MaskBuffer& effects);

/// <stem>.csv (per-image rows, '#' header lines) and <stem>.json (aggregates).
void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& stem);

struct EvalOptions {
  std::uint64_t seed = 0;
  int sampler_steps = 50;
  int batch = 8;
  std::string config_hash;
  /// Side-by-side strips written for the first this many images.
  int montages = 8;
};

/// Per-image sampling seed; every compared model uses the same one.
std::uint64_t eval_seed(std::uint64_t seed, std::size_t index);

struct ComparisonReport {
  EvalReport ours;
  EvalReport other;
  nlohmann::ordered_json delta;  // ours minus other on aggregate means
};

nlohmann::ordered_json report_delta(const EvalReport& a, const EvalReport& b);

/// Removal model vs gray-fill inpainting baseline on the held-out pairs.
ComparisonReport run_removal_eval(NoisePredictor<float>& removal, NoisePredictor<float>& baseline, const PairSet& heldout,
                                  const NoiseSchedule& sched, const EvalOptions& opt, const std::filesystem::path& out_dir,
                                  const std::string& removal_id = "removal", const std::string& baseline_id = "inpaint_baseline");

/// Removal-only evaluation of one model on held-out pairs.
EvalReport eval_removal_model(NoisePredictor<float>& model, const PairSet& heldout, const NoiseSchedule& sched,
                              const EvalOptions& opt, const std::string& model_id);

/// Decoded held-out triplets: insertion at B from a naive paste.
struct TripletSet {
  std::vector<std::string> ids;
  std::vector<ImageBuffer> background;
  std::vector<ImageBuffer> with_a;
  std::vector<ImageBuffer> with_b;
  std::vector<MaskBuffer> mask_a;
  std::vector<MaskBuffer> mask_b;
  std::vector<MaskBuffer> effects_b;
  std::vector<ImageBuffer> pasted_b;  // naive_paste(background, with_b, mask_b)
  std::vector<std::array<int, 2>> offsets;

  std::size_t size() const { return ids.size(); }
};

TripletSet load_triplets(const DatasetManifest& manifest);

EvalReport eval_insertion_model(NoisePredictor<float>& model, const TripletSet& triplets, const NoiseSchedule& sched,
                                const EvalOptions& opt, const std::string& model_id);
EvalReport eval_naive_paste(const TripletSet& triplets);

struct BootstrapAblationReport {
  EvalReport with_bootstrap;
  EvalReport without_bootstrap;
  EvalReport naive_paste;
  nlohmann::ordered_json summary;
};

BootstrapAblationReport run_bootstrap_ablation(NoisePredictor<float>& with_bootstrap, NoisePredictor<float>& without_bootstrap,
                                               const TripletSet& triplets, const NoiseSchedule& sched,
                                               const EvalOptions& opt, const std::filesystem::path& out_dir);

struct SizeAblationRow {
  std::size_t size = 0;
  EvalReport report;
};

/// Trains one removal model per nested train subset and evaluates each on
/// the same held-out pairs. A size of 0 evaluates the untrained model.
std::vector<SizeAblationRow> run_dataset_size_ablation(const DatasetManifest& manifest, const std::vector<std::size_t>& sizes,
                                                       const DenoiserConfig& model_cfg, const TrainConfig& train_cfg,
                                                       const EvalOptions& opt, const std::filesystem::path& out_dir);

}  // namespace cfedit

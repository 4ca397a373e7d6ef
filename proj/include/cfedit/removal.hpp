// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfedit/dataset.hpp"
#include "cfedit/train.hpp"

namespace cfedit {

/// Decoded (factual, counterfactual, mask) triples of one split.
struct PairSet {
  std::vector<std::string> ids;
  std::vector<ImageBuffer> factual;
  std::vector<ImageBuffer> counterfactual;
  std::vector<MaskBuffer> masks;
  std::vector<MaskBuffer> effects;  // empty when the record has no oracle regions

  std::size_t size() const { return ids.size(); }
};

PairSet load_pairs(const DatasetManifest& manifest, Split split);

inline constexpr double kEmptyMaskFraction = 0.05;

/// condition = factual with object pixels intact, target = counterfactual.
/// A fraction of draws is replaced by an identity example with an empty mask.
ExampleSource removal_source(const PairSet& pairs, double empty_mask_fraction = kEmptyMaskFraction);

/// Self-supervised inpainting: target = factual, condition = factual with a
/// random object-shaped region filled with gray 0.5. Counterfactuals unused.
ExampleSource inpaint_baseline_source(const PairSet& pairs);

inline constexpr float kGrayFill = 0.5f;

TrainResult train_removal(const DatasetManifest& manifest, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                          const std::filesystem::path& out_dir, Denoiser<float>* trained = nullptr,
                          const nlohmann::ordered_json& provenance = nlohmann::ordered_json::object());

TrainResult train_inpaint_baseline(const DatasetManifest& manifest, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                                   const std::filesystem::path& out_dir, Denoiser<float>* trained = nullptr,
                                   const nlohmann::ordered_json& provenance = nlohmann::ordered_json::object());

/// Samples the counterfactual; the object is not pre-erased.
ImageBuffer remove(NoisePredictor<float>& model, const ImageBuffer& factual, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps = 50);
std::vector<ImageBuffer> remove_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> factual,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps = 50);

/// Baseline inference: the masked region is gray-filled before sampling.
ImageBuffer inpaint(NoisePredictor<float>& model, const ImageBuffer& factual, const MaskBuffer& mask,
                    const NoiseSchedule& sched, std::uint64_t seed, int steps = 50);
std::vector<ImageBuffer> inpaint_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> factual,
                                       std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                       std::span<const std::uint64_t> seeds, int steps = 50);

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfedit/dataset.hpp"
#include "cfedit/removal.hpp"
#include "cfedit/train.hpp"

namespace cfedit {

/// (pasted input, target, mask) triples for insertion training.
struct InsertionSet {
  std::vector<ImageBuffer> pasted;
  std::vector<ImageBuffer> target;
  std::vector<MaskBuffer> masks;

  std::size_t size() const { return pasted.size(); }
};

/// Bootstrap records: input y -> target x.
InsertionSet load_bootstrap_examples(const DatasetManifest& manifest);

/// Ground-truth pairs reframed for insertion: the object is pasted onto the
/// counterfactual without its effects and the factual is the target.
InsertionSet insertion_pairs(const PairSet& pairs);

ExampleSource insertion_source(const InsertionSet& set);

// Sidecar "stage" values; finetuning checks the lineage.
inline constexpr const char* kStagePretrain = "insertion_pretrain";
inline constexpr const char* kStageFinetune = "insertion_finetune";
inline constexpr const char* kStageScratch = "insertion_scratch";

/// A randomly initialized image-only denoiser whose stem is then widened by
/// the 4 condition channels with zero weights.
Denoiser<float> fresh_insertion_model(DenoiserConfig cfg);

TrainResult pretrain_insertion(const DatasetManifest& bootstrap, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                               const std::filesystem::path& out_dir, Denoiser<float>* trained = nullptr,
                               const nlohmann::ordered_json& provenance = nlohmann::ordered_json::object());

/// Finetunes `model` on ground-truth pairs. `lineage` is the provenance of the
/// checkpoint `model` came from; without pretrain lineage this throws unless
/// `allow_scratch`.
TrainResult finetune_insertion(Denoiser<float>& model, const nlohmann::json& lineage, const DatasetManifest& pairs,
                               const TrainConfig& cfg, const std::filesystem::path& out_dir, bool allow_scratch,
                               const nlohmann::ordered_json& provenance = nlohmann::ordered_json::object());

ImageBuffer insert(NoisePredictor<float>& model, const ImageBuffer& pasted, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps = 50);
std::vector<ImageBuffer> insert_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> pasted,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps = 50);

struct MoveResult {
  ImageBuffer background;  // removal output at the original position
  ImageBuffer pasted;
  ImageBuffer output;
  MaskBuffer moved_mask;
};

/// Remove, translate the object crop by (dx, dy), naive-paste, then insert.
/// Throws ArgumentError if the moved mask leaves the frame.
MoveResult intra_image_move(NoisePredictor<float>& removal_model, NoisePredictor<float>& insertion_model,
                            const ImageBuffer& image, const MaskBuffer& mask, int dx, int dy, const NoiseSchedule& sched,
                            std::uint64_t seed, int steps = 50);

/// Seed used for the insertion half of a move.
std::uint64_t insertion_seed(std::uint64_t seed);

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/removal.hpp"

namespace cfedit {

PairSet load_pairs(const DatasetManifest& manifest, Split split) {
  PairSet set;
  for (const ManifestRecord* r : manifest.of_kind(RecordKind::removal_pair, split)) {
    set.ids.push_back(r->id);
    set.factual.push_back(manifest.image(*r, "factual"));
    set.counterfactual.push_back(r->paths.contains("counterfactual") ? manifest.image(*r, "counterfactual") : ImageBuffer());
    set.masks.push_back(manifest.mask(*r));
    set.effects.push_back(r->paths.contains("effects") ? manifest.mask(*r, "effects") : MaskBuffer());
  }
  return set;
}

ExampleSource removal_source(const PairSet& pairs, double empty_mask_fraction) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs.counterfactual[i].height() == 0) throw ArgumentError("removal training needs counterfactuals; record " + pairs.ids[i] + " has none");
  }
  return [&pairs, empty_mask_fraction](std::size_t i, Rng& rng) {
    if (rng.bernoulli(empty_mask_fraction)) {
      const ImageBuffer& x = rng.bernoulli(0.5) ? pairs.factual[i] : pairs.counterfactual[i];
      return TrainExample{x, x, MaskBuffer(x.height(), x.width())};
    }
    return TrainExample{pairs.counterfactual[i], pairs.factual[i], pairs.masks[i]};
  };
}

ExampleSource inpaint_baseline_source(const PairSet& pairs) {
  return [&pairs](std::size_t i, Rng& rng) {
    const ImageBuffer& x = pairs.factual[i];
    if (x.width() != x.height()) throw ShapeError("inpainting baseline expects square images");
    // A fresh random object silhouette, unrelated to the true object.
    const SceneSpec shape_donor = sample_scene(rng.next(), x.height());
    MaskBuffer mask = object_regions(shape_donor, *shape_donor.removable()).silhouette;
    return TrainExample{x, fill_masked(x, mask, kGrayFill), std::move(mask)};
  };
}

namespace {

TrainResult train_with(const DatasetManifest& manifest, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                       const std::filesystem::path& out_dir, Denoiser<float>* trained, nlohmann::ordered_json provenance,
                       bool baseline) {
  const PairSet pairs = load_pairs(manifest, Split::train);
  if (pairs.size() == 0) throw ArgumentError("no removal_pair records in the train split of " + manifest.root().string());
  if (model_cfg.condition_channels() != kEditConditionChannels) {
    throw ArgumentError("removal models take " + std::to_string(kImageChannels + kEditConditionChannels) + " input channels");
  }
  Denoiser<float> model(model_cfg);
  provenance["stage"] = baseline ? "inpaint_baseline" : "removal";
  provenance["dataset"] = manifest.root().string();
  provenance["train_pairs"] = pairs.size();
  const ExampleSource source = baseline ? inpaint_baseline_source(pairs) : removal_source(pairs);
  TrainResult result = train_denoiser(model, make_schedule(model_cfg.timesteps), pairs.size(), source, cfg, out_dir, provenance);
  if (trained != nullptr) *trained = std::move(model);
  return result;
}

}  // namespace

TrainResult train_removal(const DatasetManifest& manifest, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                          const std::filesystem::path& out_dir, Denoiser<float>* trained,
                          const nlohmann::ordered_json& provenance) {
  return train_with(manifest, model_cfg, cfg, out_dir, trained, provenance, false);
}

TrainResult train_inpaint_baseline(const DatasetManifest& manifest, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                                   const std::filesystem::path& out_dir, Denoiser<float>* trained,
                                   const nlohmann::ordered_json& provenance) {
  return train_with(manifest, model_cfg, cfg, out_dir, trained, provenance, true);
}

std::vector<ImageBuffer> remove_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> factual,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps) {
  return sample_batch(model, factual, masks, sched, seeds, steps);
}

ImageBuffer remove(NoisePredictor<float>& model, const ImageBuffer& factual, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps) {
  require_same_dims(factual, mask, "remove");
  return sample(model, factual, mask, sched, seed, steps);
}

std::vector<ImageBuffer> inpaint_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> factual,
                                       std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                       std::span<const std::uint64_t> seeds, int steps) {
  if (factual.size() != masks.size()) throw ShapeError("inpaint_batch: image and mask counts differ");
  std::vector<ImageBuffer> filled;
  filled.reserve(factual.size());
  for (std::size_t i = 0; i < factual.size(); ++i) filled.push_back(fill_masked(factual[i], masks[i], kGrayFill));
  return sample_batch(model, filled, masks, sched, seeds, steps);
}

ImageBuffer inpaint(NoisePredictor<float>& model, const ImageBuffer& factual, const MaskBuffer& mask,
                    const NoiseSchedule& sched, std::uint64_t seed, int steps) {
  return inpaint_batch(model, std::span(&factual, 1), std::span(&mask, 1), sched, std::span(&seed, 1), steps).front();
}

}  // namespace cfedit

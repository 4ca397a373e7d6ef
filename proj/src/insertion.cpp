// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/insertion.hpp"

namespace cfedit {

InsertionSet load_bootstrap_examples(const DatasetManifest& manifest) {
  InsertionSet set;
  for (const ManifestRecord* r : manifest.of_kind(RecordKind::bootstrap_example, Split::train)) {
    set.pasted.push_back(manifest.image(*r, "input"));
    set.target.push_back(manifest.image(*r, "target"));
    set.masks.push_back(manifest.mask(*r));
  }
  return set;
}

InsertionSet insertion_pairs(const PairSet& pairs) {
  InsertionSet set;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs.counterfactual[i].height() == 0) throw ArgumentError("record " + pairs.ids[i] + " has no counterfactual");
    set.pasted.push_back(naive_paste(pairs.counterfactual[i], pairs.factual[i], pairs.masks[i]));
    set.target.push_back(pairs.factual[i]);
    set.masks.push_back(pairs.masks[i]);
  }
  return set;
}

ExampleSource insertion_source(const InsertionSet& set) {
  return [&set](std::size_t i, Rng&) { return TrainExample{set.target[i], set.pasted[i], set.masks[i]}; };
}

Denoiser<float> fresh_insertion_model(DenoiserConfig cfg) {
  cfg.in_channels = kImageChannels;
  return Denoiser<float>(cfg).expand_input_channels_zero_init(kEditConditionChannels);
}

TrainResult pretrain_insertion(const DatasetManifest& bootstrap, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                               const std::filesystem::path& out_dir, Denoiser<float>* trained,
                               const nlohmann::ordered_json& provenance) {
  const InsertionSet set = load_bootstrap_examples(bootstrap);
  if (set.size() == 0) throw ArgumentError("no bootstrap_example records in " + bootstrap.root().string());
  Denoiser<float> model = fresh_insertion_model(model_cfg);
  nlohmann::ordered_json prov = provenance;
  prov["stage"] = kStagePretrain;
  prov["dataset"] = bootstrap.root().string();
  prov["train_examples"] = set.size();
  TrainResult result =
      train_denoiser(model, make_schedule(model_cfg.timesteps), set.size(), insertion_source(set), cfg, out_dir, prov);
  if (trained != nullptr) *trained = std::move(model);
  return result;
}

TrainResult finetune_insertion(Denoiser<float>& model, const nlohmann::json& lineage, const DatasetManifest& pairs,
                               const TrainConfig& cfg, const std::filesystem::path& out_dir, bool allow_scratch,
                               const nlohmann::ordered_json& provenance) {
  const bool pretrained = lineage.is_object() && lineage.value("stage", "") == kStagePretrain;
  if (!pretrained && !allow_scratch) {
    throw ArgumentError("finetune_insertion: initial checkpoint has no " + std::string(kStagePretrain) +
                        " lineage (pass --allow-scratch to train the no-bootstrap arm)");
  }
  const PairSet gt = load_pairs(pairs, Split::train);
  if (gt.size() == 0) throw ArgumentError("no removal_pair records in the train split of " + pairs.root().string());
  const InsertionSet set = insertion_pairs(gt);
  nlohmann::ordered_json prov = provenance;
  prov["stage"] = pretrained ? kStageFinetune : kStageScratch;
  prov["dataset"] = pairs.root().string();
  prov["train_pairs"] = set.size();
  prov["lineage"] = lineage;
  return train_denoiser(model, make_schedule(model.config().timesteps), set.size(), insertion_source(set), cfg, out_dir, prov);
}

std::vector<ImageBuffer> insert_batch(NoisePredictor<float>& model, std::span<const ImageBuffer> pasted,
                                      std::span<const MaskBuffer> masks, const NoiseSchedule& sched,
                                      std::span<const std::uint64_t> seeds, int steps) {
  return sample_batch(model, pasted, masks, sched, seeds, steps);
}

ImageBuffer insert(NoisePredictor<float>& model, const ImageBuffer& pasted, const MaskBuffer& mask,
                   const NoiseSchedule& sched, std::uint64_t seed, int steps) {
  require_same_dims(pasted, mask, "insert");
  return sample(model, pasted, mask, sched, seed, steps);
}

std::uint64_t insertion_seed(std::uint64_t seed) { return mix_seed(seed, 0x696e73); }

MoveResult intra_image_move(NoisePredictor<float>& removal_model, NoisePredictor<float>& insertion_model,
                            const ImageBuffer& image, const MaskBuffer& mask, int dx, int dy, const NoiseSchedule& sched,
                            std::uint64_t seed, int steps) {
  require_same_dims(image, mask, "intra_image_move");
  MoveResult r;
  r.moved_mask = mask.translated(dx, dy);
  if (r.moved_mask.count() != mask.count()) {
    throw ArgumentError("intra_image_move: offset (" + std::to_string(dx) + ", " + std::to_string(dy) +
                        ") moves the object out of the frame");
  }
  r.background = remove(removal_model, image, mask, sched, seed, steps);
  r.pasted = naive_paste(r.background, translated(image, dx, dy), r.moved_mask);
  r.output = insert(insertion_model, r.pasted, r.moved_mask, sched, insertion_seed(seed), steps);
  return r;
}

}  // namespace cfedit

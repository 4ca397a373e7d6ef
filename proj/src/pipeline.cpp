// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/pipeline.hpp"

#include <fstream>
#include <iostream>

namespace cfedit {

namespace {

nlohmann::ordered_json run_provenance(const RunConfig& cfg) {
  nlohmann::ordered_json p;
  p["config_hash"] = cfg.hash();
  p["config"] = cfg.values();
  return p;
}

void note(const std::string& stage) { std::clog << "[pipeline] " << stage << std::endl; }

}  // namespace

EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions opt;
  opt.seed = mix_seed(cfg.seed(), fnv1a64("eval"));
  opt.sampler_steps = cfg.sampler_steps();
  opt.batch = cfg.get_int("eval_batch");
  opt.config_hash = cfg.hash();
  return opt;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  const PipelineLayout at{cfg.get("out")};
  const int res = cfg.get_int("resolution");
  const std::uint64_t seed = cfg.seed();
  const DenoiserConfig model_cfg = cfg.model_config();
  const NoiseSchedule sched = make_schedule(model_cfg.timesteps);
  const EvalOptions opt = eval_options(cfg);
  const nlohmann::ordered_json prov = run_provenance(cfg);
  cfg.write(at.root);

  note("data");
  const DatasetManifest pairs =
      generate_counterfactual_dataset(cfg.get_int("n_train"), cfg.get_int("n_heldout"), seed, at.pairs(), res);
  const DatasetManifest source = generate_source_corpus(cfg.get_int("n_source"), seed, at.source(), res);
  const DatasetManifest triplets = generate_triplets(cfg.get_int("n_triplets"), seed, at.triplets(), res);
  for (const auto& dir : {at.pairs(), at.source(), at.triplets()}) cfg.write(dir);

  note("removal");
  cfg.write(at.removal());
  Denoiser<float> removal(model_cfg);
  train_removal(pairs, model_cfg, cfg.train_config("removal"), at.removal(), &removal, prov);

  note("baseline");
  cfg.write(at.baseline());
  Denoiser<float> baseline(model_cfg);
  train_inpaint_baseline(pairs, model_cfg, cfg.train_config("baseline"), at.baseline(), &baseline, prov);

  PipelineResult result;
  note("eval_removal");
  cfg.write(at.eval_removal());
  result.removal = run_removal_eval(removal, baseline, load_pairs(pairs, Split::heldout), sched, opt, at.eval_removal());

  note("bootstrap");
  cfg.write(at.bootstrap());
  result.bootstrap = build_bootstrap_set(removal, sched, source, at.bootstrap(), cfg.bootstrap_config());
  const DatasetManifest boot = DatasetManifest::load(at.bootstrap());

  note("insertion_pretrain");
  cfg.write(at.pretrain());
  Denoiser<float> with_boot = fresh_insertion_model(model_cfg);
  const TrainResult pre = pretrain_insertion(boot, model_cfg, cfg.train_config("pretrain"), at.pretrain(), &with_boot, prov);

  note("insertion_finetune");
  cfg.write(at.finetune());
  finetune_insertion(with_boot, read_sidecar(pre.checkpoint).at("provenance"), pairs, cfg.train_config("finetune"),
                     at.finetune(), false, prov);

  note("insertion_scratch");
  cfg.write(at.scratch());
  Denoiser<float> without_boot = fresh_insertion_model(model_cfg);
  finetune_insertion(without_boot, nullptr, pairs, cfg.train_config("scratch"), at.scratch(), true, prov);

  note("eval_insertion");
  cfg.write(at.eval_insertion());
  result.insertion = run_bootstrap_ablation(with_boot, without_boot, load_triplets(triplets), sched, opt, at.eval_insertion());

  nlohmann::ordered_json summary;
  summary["config_hash"] = cfg.hash();
  summary["removal_vs_baseline"] = result.removal.delta;
  summary["bootstrap"] = {{"candidates", result.bootstrap.candidates},
                          {"area_rejected", result.bootstrap.area_rejected},
                          {"effect_rejected", result.bootstrap.effect_rejected},
                          {"accepted", result.bootstrap.accepted}};
  summary["bootstrap_ablation"] = result.insertion.summary;
  std::ofstream os(at.root / "summary.json", std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (at.root / "summary.json").string());
  os << summary.dump(2) << '\n';
  return result;
}

}  // namespace cfedit

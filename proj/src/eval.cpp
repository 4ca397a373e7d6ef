// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace cfedit {

Aggregate aggregate(const std::vector<std::optional<double>>& values) {
  Aggregate a;
  double sum = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++a.n;
  }
  if (a.n == 0) return a;
  a.mean = sum / static_cast<double>(a.n);
  double sq = 0;
  for (const auto& v : values) {
    if (v) sq += (*v - a.mean) * (*v - a.mean);
  }
  a.std = std::sqrt(sq / static_cast<double>(a.n));
  return a;
}

namespace {

template <typename Get>
Aggregate column(const std::vector<EvalRow>& rows, Get get) {
  std::vector<std::optional<double>> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(get(r));
  return aggregate(v);
}

nlohmann::ordered_json agg_json(const Aggregate& a) {
  if (a.n == 0) return nullptr;
  return {{"mean", a.mean}, {"std", a.std}, {"n", a.n}};
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

}  // namespace

Aggregate EvalReport::psnr() const { return column(rows, [](const EvalRow& r) { return std::optional(r.psnr); }); }
Aggregate EvalReport::ssim() const { return column(rows, [](const EvalRow& r) { return std::optional(r.ssim); }); }
Aggregate EvalReport::shadow_region_mae() const { return column(rows, [](const EvalRow& r) { return r.shadow_region_mae; }); }
Aggregate EvalReport::outside_region_mae() const { return column(rows, [](const EvalRow& r) { return r.outside_region_mae; }); }
Aggregate EvalReport::in_mask_mae() const { return column(rows, [](const EvalRow& r) { return r.in_mask_mae; }); }

nlohmann::ordered_json EvalReport::summary() const {
  nlohmann::ordered_json j;
  j["model_id"] = model_id;
  j["dataset_id"] = dataset_id;
  j["config_hash"] = config_hash;
  j["metric_note"] = kMetricNote;
  j["images"] = rows.size();
  j["psnr"] = agg_json(psnr());
  j["ssim_proxy"] = agg_json(ssim());
  j["shadow_region_mae"] = agg_json(shadow_region_mae());
  j["outside_region_mae"] = agg_json(outside_region_mae());
  j["in_mask_mae"] = agg_json(in_mask_mae());
  return j;
}

EvalRow evaluate_image(const std::string& id, const ImageBuffer& pred, const ImageBuffer& truth, const MaskBuffer& mask,
                       const MaskBuffer& effects) {
  EvalRow row;
  row.id = id;
  row.psnr = psnr(pred, truth);
  row.ssim = ssim_proxy(pred, truth);
  const RegionMetrics rm = region_metrics(pred, truth, mask, effects);
  row.shadow_region_mae = rm.shadow_region_mae;
  row.outside_region_mae = rm.outside_region_mae;
  row.in_mask_mae = rm.in_mask_mae;
  return row;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (stem + ".csv"), std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write report in " + dir.string());
    os << "# model: " << report.model_id << "\n# dataset: " << report.dataset_id << "\n# config_hash: " << report.config_hash
       << "\n# note: " << kMetricNote << "\n";
    os << "id,psnr,ssim_proxy,shadow_region_mae,outside_region_mae,in_mask_mae\n";
    for (const auto& r : report.rows) {
      os << r.id << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ',' << fmt(r.shadow_region_mae) << ','
         << fmt(r.outside_region_mae) << ',' << fmt(r.in_mask_mae) << '\n';
    }
  }
  std::ofstream js(dir / (stem + ".json"), std::ios::binary | std::ios::trunc);
  if (!js) throw IoError("cannot write report in " + dir.string());
  js << report.summary().dump(2) << '\n';
}

std::uint64_t eval_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed ^ 0x6576616cULL, index); }

nlohmann::ordered_json report_delta(const EvalReport& a, const EvalReport& b) {
  auto diff = [](const Aggregate& x, const Aggregate& y) -> nlohmann::ordered_json {
    if (x.n == 0 || y.n == 0) return nullptr;
    return x.mean - y.mean;
  };
  nlohmann::ordered_json d;
  d["ours"] = a.model_id;
  d["other"] = b.model_id;
  d["psnr"] = diff(a.psnr(), b.psnr());
  d["ssim_proxy"] = diff(a.ssim(), b.ssim());
  d["shadow_region_mae"] = diff(a.shadow_region_mae(), b.shadow_region_mae());
  d["outside_region_mae"] = diff(a.outside_region_mae(), b.outside_region_mae());
  d["in_mask_mae"] = diff(a.in_mask_mae(), b.in_mask_mae());
  return d;
}

namespace {

std::vector<std::uint64_t> seeds_for(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = eval_seed(seed, i);
  return s;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

EvalReport score(const std::string& model_id, const std::vector<std::string>& ids, const std::vector<ImageBuffer>& preds,
                 const std::vector<ImageBuffer>& truth, const std::vector<MaskBuffer>& masks,
                 const std::vector<MaskBuffer>& effects, const EvalOptions& opt) {
  EvalReport rep;
  rep.model_id = model_id;
  rep.config_hash = opt.config_hash;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const MaskBuffer none(masks[i].height(), masks[i].width());
    rep.rows.push_back(evaluate_image(ids[i], preds[i].quantized(), truth[i], masks[i], effects[i].pixels() ? effects[i] : none));
  }
  return rep;
}

}  // namespace

EvalReport eval_removal_model(NoisePredictor<float>& model, const PairSet& heldout, const NoiseSchedule& sched,
                              const EvalOptions& opt, const std::string& model_id) {
  const auto seeds = seeds_for(heldout.size(), opt.seed);
  const auto preds = sample_batch(model, heldout.factual, heldout.masks, sched, seeds, opt.sampler_steps, opt.batch);
  return score(model_id, heldout.ids, preds, heldout.counterfactual, heldout.masks, heldout.effects, opt);
}

ComparisonReport run_removal_eval(NoisePredictor<float>& removal, NoisePredictor<float>& baseline, const PairSet& heldout,
                                  const NoiseSchedule& sched, const EvalOptions& opt, const std::filesystem::path& out_dir,
                                  const std::string& removal_id, const std::string& baseline_id) {
  if (heldout.size() == 0) throw ArgumentError("run_removal_eval: held-out split is empty");
  const auto seeds = seeds_for(heldout.size(), opt.seed);
  const auto ours = sample_batch(removal, heldout.factual, heldout.masks, sched, seeds, opt.sampler_steps, opt.batch);
  const auto base = inpaint_batch(baseline, heldout.factual, heldout.masks, sched, seeds, opt.sampler_steps);
  ComparisonReport r;
  r.ours = score(removal_id, heldout.ids, ours, heldout.counterfactual, heldout.masks, heldout.effects, opt);
  r.other = score(baseline_id, heldout.ids, base, heldout.counterfactual, heldout.masks, heldout.effects, opt);
  r.delta = report_delta(r.ours, r.other);
  if (!out_dir.empty()) {
    write_report(r.ours, out_dir, "removal_report");
    write_report(r.other, out_dir, "baseline_report");
    write_json(out_dir / "removal_vs_baseline.json", r.delta);
    for (std::size_t i = 0; i < std::min<std::size_t>(heldout.size(), static_cast<std::size_t>(std::max(0, opt.montages))); ++i) {
      const std::vector<ImageBuffer> strip{heldout.factual[i], heldout.counterfactual[i], ours[i], base[i]};
      write_ppm(out_dir / "montages" / (heldout.ids[i] + ".ppm"), montage(strip));
    }
  }
  return r;
}

TripletSet load_triplets(const DatasetManifest& manifest) {
  TripletSet t;
  for (const ManifestRecord* r : manifest.of_kind(RecordKind::triplet, Split::heldout)) {
    t.ids.push_back(r->id);
    t.background.push_back(manifest.image(*r, "background"));
    t.with_a.push_back(manifest.image(*r, "with_a"));
    t.with_b.push_back(manifest.image(*r, "with_b"));
    t.mask_a.push_back(manifest.mask(*r, "mask"));
    t.mask_b.push_back(manifest.mask(*r, "mask_b"));
    t.effects_b.push_back(manifest.mask(*r, "effects_b"));
    t.pasted_b.push_back(naive_paste(t.background.back(), t.with_b.back(), t.mask_b.back()));
    t.offsets.push_back({r->meta.value("dx", 0), r->meta.value("dy", 0)});
  }
  return t;
}

EvalReport eval_insertion_model(NoisePredictor<float>& model, const TripletSet& triplets, const NoiseSchedule& sched,
                                const EvalOptions& opt, const std::string& model_id) {
  const auto seeds = seeds_for(triplets.size(), opt.seed);
  const auto preds = insert_batch(model, triplets.pasted_b, triplets.mask_b, sched, seeds, opt.sampler_steps);
  return score(model_id, triplets.ids, preds, triplets.with_b, triplets.mask_b, triplets.effects_b, opt);
}

EvalReport eval_naive_paste(const TripletSet& triplets) {
  EvalOptions opt;
  return score("naive_paste", triplets.ids, triplets.pasted_b, triplets.with_b, triplets.mask_b, triplets.effects_b, opt);
}

BootstrapAblationReport run_bootstrap_ablation(NoisePredictor<float>& with_bootstrap, NoisePredictor<float>& without_bootstrap,
                                               const TripletSet& triplets, const NoiseSchedule& sched,
                                               const EvalOptions& opt, const std::filesystem::path& out_dir) {
  if (triplets.size() == 0) throw ArgumentError("run_bootstrap_ablation: no held-out triplets");
  BootstrapAblationReport r;
  r.with_bootstrap = eval_insertion_model(with_bootstrap, triplets, sched, opt, "insertion_with_bootstrap");
  r.without_bootstrap = eval_insertion_model(without_bootstrap, triplets, sched, opt, "insertion_without_bootstrap");
  r.naive_paste = eval_naive_paste(triplets);
  r.naive_paste.config_hash = opt.config_hash;
  r.summary["with_vs_without"] = report_delta(r.with_bootstrap, r.without_bootstrap);
  r.summary["with_vs_naive"] = report_delta(r.with_bootstrap, r.naive_paste);
  r.summary["without_vs_naive"] = report_delta(r.without_bootstrap, r.naive_paste);
  if (!out_dir.empty()) {
    write_report(r.with_bootstrap, out_dir, "with_bootstrap_report");
    write_report(r.without_bootstrap, out_dir, "without_bootstrap_report");
    write_report(r.naive_paste, out_dir, "naive_paste_report");
    write_json(out_dir / "bootstrap_ablation.json", r.summary);
  }
  return r;
}

std::vector<SizeAblationRow> run_dataset_size_ablation(const DatasetManifest& manifest, const std::vector<std::size_t>& sizes,
                                                       const DenoiserConfig& model_cfg, const TrainConfig& train_cfg,
                                                       const EvalOptions& opt, const std::filesystem::path& out_dir) {
  const PairSet heldout = load_pairs(manifest, Split::heldout);
  if (heldout.size() == 0) throw ArgumentError("run_dataset_size_ablation: held-out split is empty");
  const std::size_t available = manifest.of_kind(RecordKind::removal_pair, Split::train).size();
  for (std::size_t s : sizes) {
    if (s > available) {
      throw ArgumentError("run_dataset_size_ablation: size " + std::to_string(s) + " exceeds the " + std::to_string(available) +
                          " training pairs");
    }
  }
  const NoiseSchedule sched = make_schedule(model_cfg.timesteps);
  std::vector<SizeAblationRow> rows;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (std::size_t s : sizes) {
    const std::string tag = "size_" + std::to_string(s);
    Denoiser<float> model(model_cfg);
    if (s > 0) {
      TrainConfig cfg = train_cfg;
      cfg.checkpoint_prefix = "removal";
      train_removal(train_subset(manifest, s), model_cfg, cfg, out_dir.empty() ? out_dir : out_dir / tag, &model,
                    {{"ablation", "dataset_size"}, {"subset_size", s}});
    }
    SizeAblationRow row{s, eval_removal_model(model, heldout, sched, opt, tag)};
    row.report.dataset_id = manifest.root().string();
    if (!out_dir.empty()) write_report(row.report, out_dir, tag + "_report");
    table.push_back({{"size", s}, {"psnr", row.report.psnr().mean}, {"ssim_proxy", row.report.ssim().mean},
                     {"shadow_region_mae", agg_json(row.report.shadow_region_mae())}});
    rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) write_json(out_dir / "size_ablation.json", {{"metric_note", kMetricNote}, {"rows", table}});
  return rows;
}

}  // namespace cfedit

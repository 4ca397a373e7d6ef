// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "cfedit/removal.hpp"

namespace cfedit {

namespace {

// Fractions are ratios of pixel counts; the slack only absorbs the rounding
// of the ratio itself so that e.g. 500/10000 counts as exactly 5%.
constexpr double kBoundarySlack = 1e-12;

}  // namespace

AreaFilterResult area_filters(const MaskBuffer& mask, const AreaFilterConfig& cfg) {
  AreaFilterResult r;
  if (mask.pixels() == 0) return r;
  r.mask_area_fraction = mask.area_fraction();
  const int band = std::clamp(cfg.band_rows, 1, mask.height());
  std::size_t columns = 0;
  for (int x = 0; x < mask.width(); ++x) {
    bool hit = false;
    for (int y = mask.height() - band; y < mask.height() && !hit; ++y) hit = mask.at(y, x) != 0;
    columns += hit ? 1 : 0;
  }
  r.bottom_boundary_fraction = static_cast<double>(columns) / mask.width();
  r.area_ok = r.mask_area_fraction >= cfg.min_area - kBoundarySlack && r.mask_area_fraction <= cfg.max_area + kBoundarySlack;
  r.boundary_ok = r.bottom_boundary_fraction <= cfg.max_bottom_fraction + kBoundarySlack;
  return r;
}

EffectFilterResult effect_filter(const ImageBuffer& x, const ImageBuffer& y, const MaskBuffer& mask, double tau,
                                 double min_frac) {
  require_same_dims(x, y, "effect_filter");
  require_same_dims(x, mask, "effect_filter");
  std::size_t changed = 0;
  for (int r = 0; r < x.height(); ++r) {
    for (int c = 0; c < x.width(); ++c) {
      if (mask.at(r, c)) continue;
      double diff = 0;
      for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
        diff = std::max(diff, std::abs(static_cast<double>(x.at(ch, r, c)) - y.at(ch, r, c)));
      }
      changed += diff > tau ? 1 : 0;
    }
  }
  EffectFilterResult out;
  out.effect_area_fraction = x.pixels() == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(x.pixels());
  out.pass = out.effect_area_fraction >= min_frac - kBoundarySlack;
  return out;
}

BootstrapExample compose_example(const ImageBuffer& x, const MaskBuffer& mask, const ImageBuffer& removed) {
  BootstrapExample ex;
  ex.z = removed.quantized();
  ex.y = naive_paste(ex.z, x, mask);
  ex.target = x;
  ex.mask = mask;
  return ex;
}

BootstrapExample synthesize_example(NoisePredictor<float>& removal_model, const ImageBuffer& x, const MaskBuffer& mask,
                                    const NoiseSchedule& sched, std::uint64_t seed, int steps) {
  return compose_example(x, mask, remove(removal_model, x, mask, sched, seed, steps));
}

namespace {

std::set<std::string> reported_ids(const std::filesystem::path& path) {
  std::set<std::string> ids;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      ids.insert(nlohmann::json::parse(line).at("id").get<std::string>());
    } catch (const nlohmann::json::exception&) {
      // torn final line from an interrupted run; that candidate is redone
    }
  }
  return ids;
}

struct Candidate {
  const ManifestRecord* source;
  std::size_t index;
  std::string id;
  ImageBuffer x;
  MaskBuffer mask;
  AreaFilterResult area;
};

}  // namespace

BootstrapSummary build_bootstrap_set(NoisePredictor<float>& removal_model, const NoiseSchedule& sched,
                                     const DatasetManifest& source, const std::filesystem::path& out_dir,
                                     const BootstrapConfig& cfg) {
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");
  DatasetManifest out = DatasetManifest::load(out_dir);
  if (!std::filesystem::exists(out.manifest_path())) out.save();
  const auto report_path = out_dir / kFilterReportFile;
  const std::set<std::string> done = reported_ids(report_path);
  std::ofstream reports(report_path, std::ios::app | std::ios::binary);
  if (!reports) throw IoError("cannot append to " + report_path.string());

  BootstrapSummary summary;
  std::vector<Candidate> pending;
  auto flush = [&]() {
    std::vector<const Candidate*> to_sample;
    for (const auto& c : pending) {
      if (c.area.pass()) to_sample.push_back(&c);
    }
    std::vector<ImageBuffer> xs;
    std::vector<MaskBuffer> ms;
    std::vector<std::uint64_t> seeds;
    for (const Candidate* c : to_sample) {
      xs.push_back(c->x);
      ms.push_back(c->mask);
      seeds.push_back(mix_seed(cfg.seed, c->index));
    }
    const auto removed = xs.empty() ? std::vector<ImageBuffer>{}
                                    : sample_batch(removal_model, xs, ms, sched, seeds, cfg.sampler_steps, cfg.batch);
    std::size_t k = 0;
    for (const auto& c : pending) {
      nlohmann::ordered_json rep;
      rep["id"] = c.id;
      rep["source_id"] = c.source->id;
      rep["mask_area_fraction"] = c.area.mask_area_fraction;
      rep["bottom_boundary_fraction"] = c.area.bottom_boundary_fraction;
      rep["effect_area_fraction"] = nullptr;
      nlohmann::ordered_json verdicts = {{"area", c.area.area_ok}, {"bottom_boundary", c.area.boundary_ok}};
      bool accept = c.area.pass();
      if (accept) {
        const BootstrapExample ex = compose_example(c.x, c.mask, removed[k]);
        const std::uint64_t seed = seeds[k++];
        const EffectFilterResult eff = effect_filter(ex.target, ex.y, ex.mask, cfg.tau, cfg.min_frac);
        rep["effect_area_fraction"] = eff.effect_area_fraction;
        verdicts["effect"] = eff.pass;
        accept = eff.pass;
        if (!accept) {
          ++summary.effect_rejected;
        } else if (out.find(c.id) == nullptr) {
          ManifestRecord r;
          r.id = c.id;
          r.kind = RecordKind::bootstrap_example;
          r.split = Split::train;
          r.provenance = Provenance::bootstrapped;
          r.seed = seed;
          store_image(out_dir, r, "input", ex.y);
          store_image(out_dir, r, "target", ex.target);
          store_image(out_dir, r, "removed", ex.z);
          store_mask(out_dir, r, "mask", ex.mask);
          r.stats = {c.area.mask_area_fraction, eff.effect_area_fraction};
          r.meta["source_id"] = c.source->id;
          out.append(std::move(r));
        }
      } else {
        ++summary.area_rejected;
      }
      summary.accepted += accept ? 1 : 0;
      rep["verdicts"] = verdicts;
      rep["accept"] = accept;
      reports << rep.dump() << '\n';
      reports.flush();
    }
    pending.clear();
  };

  long processed = 0;
  summary.complete = true;
  const auto& records = source.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ManifestRecord& src = records[i];
    const std::string id = "boot_" + src.id;
    ++summary.candidates;
    if (done.contains(id)) {
      ++summary.skipped_existing;
      continue;
    }
    if (cfg.limit >= 0 && processed >= cfg.limit) {
      summary.complete = false;
      break;
    }
    ++processed;
    Candidate c{&src, i, id, source.image(src, "factual"), source.mask(src), {}};
    c.area = area_filters(c.mask, cfg.area);
    pending.push_back(std::move(c));
    if (static_cast<int>(pending.size()) >= std::max(1, cfg.batch)) flush();
  }
  flush();
  return summary;
}

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cfedit/dataset.hpp"
#include "cfedit/diffusion.hpp"

namespace cfedit {

struct AreaFilterConfig {
  double min_area = 0.05;
  double max_area = 0.50;
  double max_bottom_fraction = 0.20;
  /// Rows at the bottom of the image that count as the lower boundary.
  int band_rows = 1;
};

struct AreaFilterResult {
  double mask_area_fraction = 0;
  double bottom_boundary_fraction = 0;
  bool area_ok = false;
  bool boundary_ok = false;
  bool pass() const { return area_ok && boundary_ok; }
};

/// Area within [min_area, max_area] and boundary columns / W <= the bound;
/// all bounds inclusive.
AreaFilterResult area_filters(const MaskBuffer& mask, const AreaFilterConfig& cfg = {});

struct EffectFilterResult {
  double effect_area_fraction = 0;  // changed pixels outside the mask / all pixels
  bool pass = false;
};

/// Accepts when at least min_frac of the image's pixels lie outside the mask
/// and differ by more than tau in some channel.
EffectFilterResult effect_filter(const ImageBuffer& x, const ImageBuffer& y, const MaskBuffer& mask, double tau = 0.05,
                                 double min_frac = 0.005);

struct BootstrapExample {
  ImageBuffer y;       // object pasted onto the predicted background, no effects
  ImageBuffer z;       // predicted background (quantized)
  ImageBuffer target;  // the original image x
  MaskBuffer mask;
};

/// Removes the object, then pastes it back without its effects:
/// y = mask * x + (1 - mask) * z, with z quantized first so the identity also
/// holds on the stored files.
BootstrapExample synthesize_example(NoisePredictor<float>& removal_model, const ImageBuffer& x, const MaskBuffer& mask,
                                    const NoiseSchedule& sched, std::uint64_t seed, int steps = 50);

/// Same, with the removal output supplied by the caller.
BootstrapExample compose_example(const ImageBuffer& x, const MaskBuffer& mask, const ImageBuffer& removed);

struct BootstrapConfig {
  std::uint64_t seed = 0;
  double tau = 0.05;
  double min_frac = 0.005;
  AreaFilterConfig area;
  int sampler_steps = 50;
  int batch = 8;
  /// Stop after this many new candidates (simulates an interruption); <0 = all.
  long limit = -1;
};

struct BootstrapSummary {
  std::size_t candidates = 0;
  std::size_t skipped_existing = 0;
  std::size_t area_rejected = 0;
  std::size_t effect_rejected = 0;
  std::size_t accepted = 0;
  bool complete = false;
};

inline constexpr const char* kFilterReportFile = "filter_reports.jsonl";

/// area_filters -> synthesize_example -> effect_filter over every source
/// record. Accepted examples are appended to <out_dir>/manifest.jsonl and a
/// FilterReport line per candidate to <out_dir>/filter_reports.jsonl.
/// Candidates with a report already on disk are skipped, so a rerun after an
/// interruption completes the same manifest.
BootstrapSummary build_bootstrap_set(NoisePredictor<float>& removal_model, const NoiseSchedule& sched,
                                     const DatasetManifest& source, const std::filesystem::path& out_dir,
                                     const BootstrapConfig& cfg);

}  // namespace cfedit

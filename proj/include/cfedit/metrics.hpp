// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "cfedit/image.hpp"

namespace cfedit {

/// Returned for identical images instead of +inf.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels, for images in [0,1].
double psnr(const ImageBuffer& a, const ImageBuffer& b);

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimSigma = 1.5;

/// SSIM with a 7x7 Gaussian window (sigma 1.5) over valid positions,
/// C1 = 0.01^2, C2 = 0.03^2, averaged over channels.
double ssim_proxy(const ImageBuffer& a, const ImageBuffer& b);

/// Mean absolute error over the pixels set in `region` (all channels);
/// nullopt when the region is empty.
std::optional<double> masked_mae(const ImageBuffer& a, const ImageBuffer& b, const MaskBuffer& region);

struct RegionMetrics {
  std::optional<double> shadow_region_mae;   // object effects: shadow and reflection
  std::optional<double> outside_region_mae;  // everything but mask and effects
  std::optional<double> in_mask_mae;
};

RegionMetrics region_metrics(const ImageBuffer& pred, const ImageBuffer& truth, const MaskBuffer& mask,
                             const MaskBuffer& effects);

}  // namespace cfedit

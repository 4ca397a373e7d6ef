// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/metrics.hpp"

#include <array>
#include <cmath>

namespace cfedit {

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "psnr");
  if (a.array().size() == 0) throw ShapeError("psnr: empty images");
  const double mse = (a.array().cast<double>() - b.array().cast<double>()).square().mean();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> w{};
  double total = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

double ssim_proxy(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "ssim_proxy");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw ShapeError("ssim_proxy: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " smaller than the " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  static const auto taps = gaussian_taps();
  const int oh = a.height() - kSsimWindow + 1;
  const int ow = a.width() - kSsimWindow + 1;
  double total = 0;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    double channel = 0;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kSsimWindow; ++i) {
          for (int j = 0; j < kSsimWindow; ++j) {
            const double w = taps[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j)];
            const double va = a.at(c, y + i, x + j);
            const double vb = b.at(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double var_a = saa - ma * ma;
        const double var_b = sbb - mb * mb;
        const double cov = sab - ma * mb;
        channel += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    }
    total += channel / (static_cast<double>(oh) * ow);
  }
  return total / ImageBuffer::kChannels;
}

std::optional<double> masked_mae(const ImageBuffer& a, const ImageBuffer& b, const MaskBuffer& region) {
  require_same_dims(a, b, "masked_mae");
  require_same_dims(a, region, "masked_mae");
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!region.at(y, x)) continue;
      for (int c = 0; c < ImageBuffer::kChannels; ++c) sum += std::abs(static_cast<double>(a.at(c, y, x)) - b.at(c, y, x));
      n += ImageBuffer::kChannels;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

RegionMetrics region_metrics(const ImageBuffer& pred, const ImageBuffer& truth, const MaskBuffer& mask,
                             const MaskBuffer& effects) {
  RegionMetrics m;
  const MaskBuffer effect_only = effects.minus(mask);
  m.shadow_region_mae = masked_mae(pred, truth, effect_only);
  m.outside_region_mae = masked_mae(pred, truth, (mask | effects).inverted());
  m.in_mask_mae = masked_mae(pred, truth, mask);
  return m;
}

}  // namespace cfedit

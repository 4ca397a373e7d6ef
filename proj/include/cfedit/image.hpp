// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cfedit/tensor.hpp"

namespace cfedit {

/// Planar (CHW) RGB image with values in [0, 1].
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), data_(Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(kChannels) * height * width, fill)) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  float& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  Eigen::ArrayXf& array() noexcept { return data_; }
  const Eigen::ArrayXf& array() const noexcept { return data_; }

  void clamp() { data_ = data_.max(0.0f).min(1.0f); }

  /// Round-trip through 8-bit storage (round half up).
  ImageBuffer quantized() const;

  bool same_dims(const ImageBuffer& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  friend bool operator==(const ImageBuffer& a, const ImageBuffer& b) {
    return a.same_dims(b) && (a.data_ == b.data_).all();
  }

 private:
  Eigen::Index index(int c, int y, int x) const noexcept {
    return (static_cast<Eigen::Index>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  Eigen::ArrayXf data_;
};

/// Binary H x W mask, one byte per pixel holding 0 or 1.
class MaskBuffer {
 public:
  using Array = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

  MaskBuffer() = default;
  MaskBuffer(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), data_(Array::Constant(static_cast<Eigen::Index>(height) * width, fill)) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  std::uint8_t& at(int y, int x) noexcept { return data_[static_cast<Eigen::Index>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const noexcept { return data_[static_cast<Eigen::Index>(y) * width_ + x]; }
  bool test(int y, int x) const noexcept {
    return y >= 0 && y < height_ && x >= 0 && x < width_ && at(y, x) != 0;
  }

  Array& array() noexcept { return data_; }
  const Array& array() const noexcept { return data_; }

  std::size_t count() const { return static_cast<std::size_t>((data_ != 0).count()); }
  double area_fraction() const { return pixels() == 0 ? 0.0 : static_cast<double>(count()) / static_cast<double>(pixels()); }
  bool any() const { return (data_ != 0).any(); }

  bool same_dims(const MaskBuffer& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }
  bool same_dims(const ImageBuffer& o) const noexcept { return height_ == o.height() && width_ == o.width(); }

  MaskBuffer operator|(const MaskBuffer& o) const;
  MaskBuffer operator&(const MaskBuffer& o) const;
  /// Set difference (this \ o).
  MaskBuffer minus(const MaskBuffer& o) const;
  MaskBuffer inverted() const;

  /// Shift by (dx, dy); pixels leaving the frame are dropped.
  MaskBuffer translated(int dx, int dy) const;

  friend bool operator==(const MaskBuffer& a, const MaskBuffer& b) {
    return a.same_dims(b) && (a.data_ == b.data_).all();
  }

 private:
  int height_ = 0;
  int width_ = 0;
  Array data_;
};

/// out = mask * source + (1 - mask) * background, per pixel.
ImageBuffer naive_paste(const ImageBuffer& background, const ImageBuffer& source, const MaskBuffer& mask);

/// Copy of `image` with every masked pixel set to `value` on all channels.
ImageBuffer fill_masked(const ImageBuffer& image, const MaskBuffer& mask, float value);

/// Translate image content by (dx, dy); uncovered pixels become 0.
ImageBuffer translated(const ImageBuffer& image, int dx, int dy);

std::uint8_t quantize_unit(float v) noexcept;

// Binary netpbm I/O. Images are P6 (maxval 255), masks are P5 with 0/255.
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);
ImageBuffer read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const MaskBuffer& mask);
MaskBuffer read_pgm(const std::filesystem::path& path);

/// Horizontal strip of equally sized images separated by a 1-pixel white gutter.
ImageBuffer montage(std::span<const ImageBuffer> images);

// Conversions to network tensors. Images map [0,1] -> [-1,1].
Tensor<float> images_to_tensor(std::span<const ImageBuffer> images);
Tensor<float> masks_to_tensor(std::span<const MaskBuffer> masks);
/// Inverse mapping of a (N,3,H,W) tensor in [-1,1], clamped to [0,1].
std::vector<ImageBuffer> tensor_to_images(const Tensor<float>& tensor);

void require_same_dims(const ImageBuffer& a, const ImageBuffer& b, const char* what);
void require_same_dims(const ImageBuffer& a, const MaskBuffer& m, const char* what);

}  // namespace cfedit

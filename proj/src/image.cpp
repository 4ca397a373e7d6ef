// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace cfedit {

std::uint8_t quantize_unit(float v) noexcept {
  const float c = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

ImageBuffer ImageBuffer::quantized() const {
  ImageBuffer out = *this;
  for (float& v : out.data_) v = static_cast<float>(quantize_unit(v)) / 255.0f;
  return out;
}

MaskBuffer MaskBuffer::operator|(const MaskBuffer& o) const {
  if (!same_dims(o)) throw ShapeError("mask union: dimension mismatch");
  MaskBuffer out(height_, width_);
  out.data_ = ((data_ != 0) || (o.data_ != 0)).cast<std::uint8_t>();
  return out;
}

MaskBuffer MaskBuffer::operator&(const MaskBuffer& o) const {
  if (!same_dims(o)) throw ShapeError("mask intersection: dimension mismatch");
  MaskBuffer out(height_, width_);
  out.data_ = ((data_ != 0) && (o.data_ != 0)).cast<std::uint8_t>();
  return out;
}

MaskBuffer MaskBuffer::minus(const MaskBuffer& o) const {
  if (!same_dims(o)) throw ShapeError("mask difference: dimension mismatch");
  MaskBuffer out(height_, width_);
  out.data_ = ((data_ != 0) && (o.data_ == 0)).cast<std::uint8_t>();
  return out;
}

MaskBuffer MaskBuffer::inverted() const {
  MaskBuffer out(height_, width_);
  out.data_ = (data_ == 0).cast<std::uint8_t>();
  return out;
}

MaskBuffer MaskBuffer::translated(int dx, int dy) const {
  MaskBuffer out(height_, width_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (at(y, x) && y + dy >= 0 && y + dy < height_ && x + dx >= 0 && x + dx < width_) out.at(y + dy, x + dx) = 1;
    }
  }
  return out;
}

void require_same_dims(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_dims(b)) {
    throw ShapeError(std::string(what) + ": image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

void require_same_dims(const ImageBuffer& a, const MaskBuffer& m, const char* what) {
  if (!m.same_dims(a)) {
    throw ShapeError(std::string(what) + ": image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()));
  }
}

ImageBuffer naive_paste(const ImageBuffer& background, const ImageBuffer& source, const MaskBuffer& mask) {
  require_same_dims(background, source, "naive_paste");
  require_same_dims(background, mask, "naive_paste");
  ImageBuffer out = background;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    for (int y = 0; y < background.height(); ++y) {
      for (int x = 0; x < background.width(); ++x) {
        if (mask.at(y, x)) out.at(c, y, x) = source.at(c, y, x);
      }
    }
  }
  return out;
}

ImageBuffer fill_masked(const ImageBuffer& image, const MaskBuffer& mask, float value) {
  require_same_dims(image, mask, "fill_masked");
  ImageBuffer out = image;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        if (mask.at(y, x)) out.at(c, y, x) = value;
      }
    }
  }
  return out;
}

ImageBuffer translated(const ImageBuffer& image, int dx, int dy) {
  ImageBuffer out(image.height(), image.width());
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const int sy = y - dy;
        const int sx = x - dx;
        if (sy >= 0 && sy < image.height() && sx >= 0 && sx < image.width()) out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

namespace {

void write_netpbm(const std::filesystem::path& path, const char* magic, int width, int height,
                  const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << magic << '\n' << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& is) {
  std::string token;
  char ch = 0;
  while (is.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(is, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(ch);
  }
  return token;
}

std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const std::string& magic, int channels,
                                      int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  if (next_token(is) != magic) throw IoError(path.string() + ": expected " + magic + " header");
  try {
    width = std::stoi(next_token(is));
    height = std::stoi(next_token(is));
    if (std::stoi(next_token(is)) != 255) throw IoError(path.string() + ": only maxval 255 is supported");
  } catch (const std::invalid_argument&) {
    throw IoError(path.string() + ": malformed header");
  }
  if (width <= 0 || height <= 0) throw IoError(path.string() + ": bad dimensions");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return bytes;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.pixels() * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) bytes.push_back(quantize_unit(image.at(c, y, x)));
    }
  }
  write_netpbm(path, "P6", image.width(), image.height(), bytes);
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto bytes = read_netpbm(path, "P6", 3, w, h);
  ImageBuffer image(h, w);
  std::size_t i = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = static_cast<float>(bytes[i++]) / 255.0f;
    }
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const MaskBuffer& mask) {
  std::vector<std::uint8_t> bytes(mask.pixels());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.array()[static_cast<Eigen::Index>(i)] ? 255 : 0;
  write_netpbm(path, "P5", mask.width(), mask.height(), bytes);
}

MaskBuffer read_pgm(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto bytes = read_netpbm(path, "P5", 1, w, h);
  MaskBuffer mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.array()[static_cast<Eigen::Index>(i)] = bytes[i] > 127 ? 1 : 0;
  return mask;
}

ImageBuffer montage(std::span<const ImageBuffer> images) {
  if (images.empty()) return {};
  const int h = images[0].height();
  const int w = images[0].width();
  const int n = static_cast<int>(images.size());
  ImageBuffer out(h, n * w + (n - 1), 1.0f);
  for (int i = 0; i < n; ++i) {
    require_same_dims(images[0], images[static_cast<std::size_t>(i)], "montage");
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out.at(c, y, i * (w + 1) + x) = images[static_cast<std::size_t>(i)].at(c, y, x);
      }
    }
  }
  return out;
}

Tensor<float> images_to_tensor(std::span<const ImageBuffer> images) {
  if (images.empty()) throw ArgumentError("images_to_tensor: empty batch");
  const int h = images[0].height();
  const int w = images[0].width();
  Tensor<float> out({static_cast<int>(images.size()), 3, h, w});
  const auto len = static_cast<Eigen::Index>(3) * h * w;
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_dims(images[0], images[i], "images_to_tensor");
    out.array().segment(static_cast<Eigen::Index>(i) * len, len) = images[i].array() * 2.0f - 1.0f;
  }
  return out;
}

Tensor<float> masks_to_tensor(std::span<const MaskBuffer> masks) {
  if (masks.empty()) throw ArgumentError("masks_to_tensor: empty batch");
  const int h = masks[0].height();
  const int w = masks[0].width();
  Tensor<float> out({static_cast<int>(masks.size()), 1, h, w});
  const auto len = static_cast<Eigen::Index>(h) * w;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!masks[i].same_dims(masks[0])) throw ShapeError("masks_to_tensor: dimension mismatch");
    out.array().segment(static_cast<Eigen::Index>(i) * len, len) = masks[i].array().cast<float>();
  }
  return out;
}

std::vector<ImageBuffer> tensor_to_images(const Tensor<float>& tensor) {
  if (tensor.rank() != 4 || tensor.dim(1) != 3) throw ShapeError("tensor_to_images: expected (N,3,H,W), got " + shape_str(tensor.shape()));
  const int n = tensor.dim(0);
  const int h = tensor.dim(2);
  const int w = tensor.dim(3);
  const auto len = static_cast<Eigen::Index>(3) * h * w;
  std::vector<ImageBuffer> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ImageBuffer img(h, w);
    img.array() = ((tensor.array().segment(i * len, len) + 1.0f) * 0.5f).max(0.0f).min(1.0f);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace cfedit

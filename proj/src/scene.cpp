// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfedit/rng.hpp"

namespace cfedit {

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::triangle: return "triangle";
  }
  return "unknown";
}

bool ObjectSpec::contains(double px, double py) const {
  const double dx = px - center_x;
  const double dy = py - center_y;
  const double hw = 0.5 * width;
  const double hh = 0.5 * height;
  switch (kind) {
    case ShapeKind::rectangle:
      return std::abs(dx) <= hw && std::abs(dy) <= hh;
    case ShapeKind::circle:
      return (dx / hw) * (dx / hw) + (dy / hh) * (dy / hh) <= 1.0;
    case ShapeKind::triangle: {
      const double t = (dy + hh) / height;  // 0 at the apex, 1 at the base
      return t >= 0.0 && t <= 1.0 && std::abs(dx) <= hw * t;
    }
  }
  return false;
}

int SceneSpec::horizon_row() const { return static_cast<int>(std::floor(horizon * height)); }

const ObjectSpec* SceneSpec::removable() const {
  for (const auto& o : objects) {
    if (o.removable) return &o;
  }
  return nullptr;
}

ObjectSpec* SceneSpec::removable() {
  for (auto& o : objects) {
    if (o.removable) return &o;
  }
  return nullptr;
}

namespace {

// Geometry is kept on a 1/8-pixel grid so that integer translations reproduce
// the exact same rasterization.
double snap(double v) { return std::round(v * 8.0) / 8.0; }

MaskBuffer rasterize(const SceneSpec& scene, const ObjectSpec& object) {
  MaskBuffer mask(scene.height, scene.width);
  const int y0 = std::max(0, static_cast<int>(std::floor(object.center_y - 0.5 * object.height)) - 1);
  const int y1 = std::min(scene.height - 1, static_cast<int>(std::ceil(object.center_y + 0.5 * object.height)) + 1);
  const int x0 = std::max(0, static_cast<int>(std::floor(object.center_x - 0.5 * object.width)) - 1);
  const int x1 = std::min(scene.width - 1, static_cast<int>(std::ceil(object.center_x + 0.5 * object.width)) + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (object.contains(x + 0.5, y + 0.5)) mask.at(y, x) = 1;
    }
  }
  return mask;
}

struct RowSpan {
  int top = -1;
  int bottom = -1;
  int left = -1;
  int right = -1;
  bool empty() const { return top < 0; }
};

RowSpan extent(const MaskBuffer& mask) {
  RowSpan s;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      if (s.top < 0) {
        s.top = s.bottom = y;
        s.left = s.right = x;
      }
      s.top = std::min(s.top, y);
      s.bottom = std::max(s.bottom, y);
      s.left = std::min(s.left, x);
      s.right = std::max(s.right, x);
    }
  }
  return s;
}

MaskBuffer project_shadow(const SceneSpec& scene, const MaskBuffer& silhouette) {
  MaskBuffer shadow(scene.height, scene.width);
  const RowSpan s = extent(silhouette);
  if (s.empty()) return shadow;
  const int object_rows = s.bottom - s.top + 1;
  const double shear = std::tan(scene.light.azimuth_deg * std::numbers::pi / 180.0);
  for (int ys = s.bottom + 1; ys < scene.height; ++ys) {
    const int d = ys - s.bottom;
    const double source_height = (d - 0.5) / scene.light.shadow_length;
    if (source_height >= object_rows) break;
    const int yr = s.bottom - static_cast<int>(std::floor(source_height));
    const int shift = static_cast<int>(std::lround(d * shear));
    for (int xs = 0; xs < scene.width; ++xs) {
      if (silhouette.test(yr, xs - shift)) shadow.at(ys, xs) = 1;
    }
  }
  return shadow;
}

// 3x3 box filter of a binary mask with zero padding, in ninths.
std::vector<int> soften(const MaskBuffer& mask) {
  std::vector<int> out(mask.pixels(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      int acc = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) acc += mask.test(y + dy, x + dx) ? 1 : 0;
      }
      out[static_cast<std::size_t>(y) * mask.width() + x] = acc;
    }
  }
  return out;
}

struct ObjectDraw {
  MaskBuffer silhouette;
  std::vector<int> shadow_ninths;
};

ObjectDraw prepare(const SceneSpec& scene, const ObjectSpec& object) {
  ObjectDraw d;
  d.silhouette = rasterize(scene, object);
  d.shadow_ninths = soften(project_shadow(scene, d.silhouette));
  return d;
}

void draw_background(const SceneSpec& scene, ImageBuffer& img) {
  const int hr = scene.horizon_row();
  for (int y = 0; y < scene.height; ++y) {
    const bool wall = y < hr;
    const double shade = wall ? 0.8 + 0.2 * (y + 0.5) / std::max(hr, 1)
                              : 0.7 + 0.3 * (y - hr + 0.5) / std::max(scene.height - hr, 1);
    const Rgb& albedo = wall ? scene.wall : scene.floor;
    for (int c = 0; c < 3; ++c) {
      const auto v = static_cast<float>(albedo[static_cast<std::size_t>(c)] * shade);
      for (int x = 0; x < scene.width; ++x) img.at(c, y, x) = v;
    }
  }
}

void draw_shadow(const SceneSpec& scene, const ObjectDraw& d, ImageBuffer& img) {
  const double darkening = 1.0 - scene.light.shadow_factor;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const int ninths = d.shadow_ninths[static_cast<std::size_t>(y) * scene.width + x];
      if (ninths == 0 || d.silhouette.at(y, x)) continue;
      const auto factor = static_cast<float>(1.0 - darkening * ninths / 9.0);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) *= factor;
    }
  }
}

template <typename Visit>
void for_each_reflection_pixel(const SceneSpec& scene, const MaskBuffer& silhouette, Visit visit) {
  const RowSpan s = extent(silhouette);
  if (s.empty()) return;
  const int rows = s.bottom - s.top + 1;
  for (int d = 1; d <= rows; ++d) {
    const int y = s.bottom + d;
    if (y >= scene.height) break;
    const int yr = s.bottom + 1 - d;
    const double alpha = scene.reflection_attenuation * (1.0 - static_cast<double>(d - 1) / rows);
    for (int x = 0; x < scene.width; ++x) {
      if (silhouette.at(yr, x)) visit(y, x, alpha);
    }
  }
}

void draw_reflection(const SceneSpec& scene, const ObjectSpec& object, const ObjectDraw& d, ImageBuffer& img) {
  if (!scene.reflective) return;
  for_each_reflection_pixel(scene, d.silhouette, [&](int y, int x, double alpha) {
    const auto a = static_cast<float>(alpha);
    for (int c = 0; c < 3; ++c) {
      img.at(c, y, x) = (1.0f - a) * img.at(c, y, x) + a * object.color[static_cast<std::size_t>(c)];
    }
  });
}

void draw_silhouette(const ObjectSpec& object, const ObjectDraw& d, ImageBuffer& img) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!d.silhouette.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = object.color[static_cast<std::size_t>(c)];
    }
  }
}

Rgb random_color(Rng& rng, double lo, double hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

float color_distance(const Rgb& a, const Rgb& b) {
  float m = 0;
  for (std::size_t c = 0; c < 3; ++c) m = std::max(m, std::abs(a[c] - b[c]));
  return m;
}

ObjectSpec place_object(const SceneSpec& scene, Rng& rng, double size_lo, double size_hi, bool removable) {
  ObjectSpec o;
  o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  o.removable = removable;
  const double res = std::min(scene.width, scene.height);
  o.width = std::max(kMinObjectSize, snap(rng.uniform(size_lo, size_hi) * res));
  o.height = std::max(kMinObjectSize, snap(rng.uniform(size_lo, size_hi) * res));
  const double bottom_hi = scene.height - kObjectMargin - 0.5;
  o.height = std::min(o.height, snap(bottom_hi - kObjectMargin - 1.0));
  const double bottom_lo = std::max(scene.horizon_row() + 1.5, kObjectMargin + o.height);
  const double bottom = snap(rng.uniform(bottom_lo, bottom_hi));
  o.center_y = bottom - 0.5 * o.height;
  o.center_x = snap(rng.uniform(kObjectMargin + 0.5 * o.width, scene.width - kObjectMargin - 0.5 * o.width));
  o.color = random_color(rng, 0.0, 1.0);
  for (int attempt = 0; attempt < 16 && color_distance(o.color, scene.floor) < 0.25f; ++attempt) {
    o.color = random_color(rng, 0.0, 1.0);
  }
  return o;
}

struct Box {
  int top, bottom, left, right;
  bool intersects(const Box& o, int gap) const {
    return !(right + gap < o.left || o.right + gap < left || bottom + gap < o.top || o.bottom + gap < top);
  }
};

Box footprint_box(const SceneSpec& scene, const ObjectSpec& object) {
  const RowSpan s = extent(object_regions(scene, object).footprint());
  return {s.top, s.bottom, s.left, s.right};
}

}  // namespace

ObjectRegions object_regions(const SceneSpec& scene, const ObjectSpec& object) {
  const ObjectDraw d = prepare(scene, object);
  ObjectRegions r;
  r.silhouette = d.silhouette;
  r.shadow = MaskBuffer(scene.height, scene.width);
  for (std::size_t i = 0; i < d.shadow_ninths.size(); ++i) {
    if (d.shadow_ninths[i] > 0 && !d.silhouette.array()[static_cast<Eigen::Index>(i)]) {
      r.shadow.array()[static_cast<Eigen::Index>(i)] = 1;
    }
  }
  r.reflection = MaskBuffer(scene.height, scene.width);
  if (scene.reflective) {
    for_each_reflection_pixel(scene, d.silhouette, [&](int y, int x, double) { r.reflection.at(y, x) = 1; });
  }
  return r;
}

MaskBuffer shadow_projection(const SceneSpec& scene, const ObjectSpec& object) {
  return project_shadow(scene, rasterize(scene, object));
}

ImageBuffer render_scene(const SceneSpec& scene, bool include_removable) {
  ImageBuffer img(scene.height, scene.width);
  draw_background(scene, img);
  std::vector<const ObjectSpec*> order;
  for (const auto& o : scene.objects) {
    if (!o.removable) order.push_back(&o);
  }
  if (include_removable) {
    for (const auto& o : scene.objects) {
      if (o.removable) order.push_back(&o);
    }
  }
  std::vector<ObjectDraw> draws;
  draws.reserve(order.size());
  for (const ObjectSpec* o : order) draws.push_back(prepare(scene, *o));
  for (std::size_t i = 0; i < order.size(); ++i) draw_shadow(scene, draws[i], img);
  for (std::size_t i = 0; i < order.size(); ++i) draw_reflection(scene, *order[i], draws[i], img);
  for (std::size_t i = 0; i < order.size(); ++i) draw_silhouette(*order[i], draws[i], img);
  img.clamp();
  return img;
}

RenderedPair render_pair(const SceneSpec& scene) {
  const ObjectSpec* target = scene.removable();
  if (target == nullptr) throw ArgumentError("render_pair: scene " + std::to_string(scene.seed) + " has no removable object");
  RenderedPair pair;
  pair.factual = render_scene(scene, true);
  pair.counterfactual = render_scene(scene, false);
  pair.regions = object_regions(scene, *target);
  pair.mask = pair.regions.silhouette;
  return pair;
}

void validate_object_placement(const SceneSpec& scene, const ObjectSpec& object) {
  if (object.width < kMinObjectSize || object.height < kMinObjectSize) {
    throw ArgumentError("object smaller than " + std::to_string(kMinObjectSize) + " pixels");
  }
  const RowSpan s = extent(rasterize(scene, object));
  const double left = object.center_x - 0.5 * object.width;
  const double right = object.center_x + 0.5 * object.width;
  const double top = object.center_y - 0.5 * object.height;
  const double bottom = object.bottom();
  if (s.empty() || left < kObjectMargin || top < kObjectMargin || right > scene.width - kObjectMargin ||
      bottom > scene.height - kObjectMargin - 0.5 || s.left < kObjectMargin || s.top < kObjectMargin ||
      s.right > scene.width - 1 - kObjectMargin || s.bottom > scene.height - 1 - kObjectMargin) {
    throw ArgumentError("object at (" + std::to_string(object.center_x) + ", " + std::to_string(object.center_y) +
                        ") violates the " + std::to_string(kObjectMargin) + "-pixel frame margin");
  }
  if (s.bottom < scene.horizon_row()) {
    throw ArgumentError("object at (" + std::to_string(object.center_x) + ", " + std::to_string(object.center_y) +
                        ") does not stand on the floor");
  }
}

RenderedTriplet render_triplet(const SceneSpec& scene, std::array<double, 2> pos_a, std::array<double, 2> pos_b) {
  if (scene.removable() == nullptr) throw ArgumentError("render_triplet: scene has no removable object");
  auto at = [&](std::array<double, 2> pos) {
    SceneSpec moved = scene;
    ObjectSpec* o = moved.removable();
    o->center_x = pos[0];
    o->center_y = pos[1];
    validate_object_placement(moved, *o);
    return moved;
  };
  const SceneSpec scene_a = at(pos_a);
  const SceneSpec scene_b = at(pos_b);
  RenderedTriplet t;
  t.background = render_scene(scene, false);
  t.with_a = render_scene(scene_a, true);
  t.with_b = render_scene(scene_b, true);
  t.regions_a = object_regions(scene_a, *scene_a.removable());
  t.regions_b = object_regions(scene_b, *scene_b.removable());
  t.mask_a = t.regions_a.silhouette;
  t.mask_b = t.regions_b.silhouette;
  return t;
}

SceneSpec sample_scene(std::uint64_t seed, int resolution) {
  if (resolution < 16) throw ArgumentError("sample_scene: resolution must be >= 16");
  Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.width = resolution;
  s.height = resolution;
  s.horizon = rng.uniform(0.4, 0.7);
  s.wall = random_color(rng, 0.35, 0.95);
  s.floor = random_color(rng, 0.15, 0.9);
  s.light.azimuth_deg = rng.uniform(-60.0, 60.0);
  s.light.shadow_factor = rng.uniform(0.35, 0.75);
  s.light.shadow_length = rng.uniform(0.3, 0.8);
  s.reflective = rng.bernoulli(0.4);
  s.reflection_attenuation = rng.uniform(0.2, 0.5);

  s.objects.push_back(place_object(s, rng, 0.14, 0.42, true));
  std::vector<Box> taken{footprint_box(s, s.objects.front())};
  const auto distractors = rng.uniform_int(0, 2);
  for (std::int64_t i = 0; i < distractors; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      ObjectSpec candidate = place_object(s, rng, 0.1, 0.25, false);
      const Box box = footprint_box(s, candidate);
      const bool clear = std::none_of(taken.begin(), taken.end(), [&](const Box& b) { return b.intersects(box, 1); });
      if (clear) {
        s.objects.push_back(candidate);
        taken.push_back(box);
        break;
      }
    }
  }
  return s;
}

std::optional<std::array<int, 2>> sample_move(const SceneSpec& scene, std::uint64_t seed) {
  const ObjectSpec* target = scene.removable();
  if (target == nullptr) return std::nullopt;
  Rng rng(seed);
  std::vector<Box> distractors;
  for (const auto& o : scene.objects) {
    if (!o.removable) distractors.push_back(footprint_box(scene, o));
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int dx = static_cast<int>(rng.uniform_int(-scene.width / 2, scene.width / 2));
    const int dy = static_cast<int>(rng.uniform_int(-scene.height / 6, scene.height / 6));
    if (std::abs(dx) + std::abs(dy) < 3) continue;
    ObjectSpec moved = *target;
    moved.center_x += dx;
    moved.center_y += dy;
    try {
      validate_object_placement(scene, moved);
    } catch (const ArgumentError&) {
      continue;
    }
    const Box box = footprint_box(scene, moved);
    if (std::none_of(distractors.begin(), distractors.end(), [&](const Box& b) { return b.intersects(box, 1); })) {
      return std::array<int, 2>{dx, dy};
    }
  }
  return std::nullopt;
}

}  // namespace cfedit

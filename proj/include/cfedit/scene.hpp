// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "cfedit/image.hpp"

namespace cfedit {

using Rgb = std::array<float, 3>;

enum class ShapeKind { circle, rectangle, triangle };

std::string_view to_string(ShapeKind kind);

/// One flat-colored object. Coordinates are continuous pixel units; pixel
/// (x, y) is covered when its center (x + 0.5, y + 0.5) lies inside the shape.
struct ObjectSpec {
  ShapeKind kind = ShapeKind::rectangle;
  double center_x = 0;
  double center_y = 0;
  double width = 0;
  double height = 0;
  Rgb color{};
  bool removable = false;

  double bottom() const { return center_y + 0.5 * height; }
  bool contains(double px, double py) const;
};

struct LightSpec {
  /// Degrees from vertical; positive shears shadows toward +x.
  double azimuth_deg = 0;
  /// Multiplier applied to fully shadowed pixels: 1 means no darkening.
  double shadow_factor = 0.5;
  /// Shadow rows per object row.
  double shadow_length = 0.5;
};

/// Procedural scene: wall above the horizon, floor below, one light, an
/// optional reflective floor and a list of objects standing on the floor.
struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  double horizon = 0.5;  // fraction of the height where the floor starts
  Rgb wall{};
  Rgb floor{};
  LightSpec light;
  bool reflective = false;
  double reflection_attenuation = 0.3;
  std::vector<ObjectSpec> objects;

  int horizon_row() const;
  const ObjectSpec* removable() const;
  ObjectSpec* removable();
};

inline constexpr int kObjectMargin = 2;
inline constexpr double kMinObjectSize = 4.0;

/// Deterministic scene for a seed; always contains exactly one removable object.
SceneSpec sample_scene(std::uint64_t seed, int resolution = 64);

/// Per-object pixel sets as drawn by the renderer.
struct ObjectRegions {
  MaskBuffer silhouette;
  MaskBuffer shadow;      // touched by the softened shadow, silhouette excluded
  MaskBuffer reflection;  // touched by the mirrored composite

  MaskBuffer effects() const { return (shadow | reflection).minus(silhouette); }
  MaskBuffer footprint() const { return silhouette | shadow | reflection; }
};

ObjectRegions object_regions(const SceneSpec& scene, const ObjectSpec& object);

/// Binary shadow projection before softening.
MaskBuffer shadow_projection(const SceneSpec& scene, const ObjectSpec& object);

/// Renders the scene; the removable object (with its shadow and reflection)
/// is drawn only when `include_removable`.
ImageBuffer render_scene(const SceneSpec& scene, bool include_removable);

struct RenderedPair {
  ImageBuffer factual;
  ImageBuffer counterfactual;
  MaskBuffer mask;
  ObjectRegions regions;
};

RenderedPair render_pair(const SceneSpec& scene);

struct RenderedTriplet {
  ImageBuffer background;
  ImageBuffer with_a;
  ImageBuffer with_b;
  MaskBuffer mask_a;
  MaskBuffer mask_b;
  ObjectRegions regions_a;
  ObjectRegions regions_b;
};

/// Renders the scene empty, with the removable object centered at `pos_a`,
/// and centered at `pos_b`.
RenderedTriplet render_triplet(const SceneSpec& scene, std::array<double, 2> pos_a, std::array<double, 2> pos_b);

/// Throws ArgumentError unless the object lies inside the frame with the
/// required margin and stands on the floor.
void validate_object_placement(const SceneSpec& scene, const ObjectSpec& object);

/// Integer offset (dx, dy) for the removable object that keeps it valid and
/// its footprint clear of every distractor; nullopt if none found.
std::optional<std::array<int, 2>> sample_move(const SceneSpec& scene, std::uint64_t seed);

}  // namespace cfedit

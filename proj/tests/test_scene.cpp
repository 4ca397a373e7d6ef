// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "cfedit/rng.hpp"
#include "cfedit/scene.hpp"

using namespace cfedit;

namespace {

// Pixels where any channel differs.
MaskBuffer changed(const ImageBuffer& a, const ImageBuffer& b) {
  MaskBuffer m(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < 3; ++c)
        if (a.at(c, y, x) != b.at(c, y, x)) m.at(y, x) = 1;
  return m;
}

SceneSpec box_scene() {
  SceneSpec s;
  s.width = s.height = 32;
  s.horizon = 0.5;
  s.wall = {0.8f, 0.7f, 0.6f};
  s.floor = {0.5f, 0.5f, 0.5f};
  s.light = {0.0, 0.5, 0.5};
  ObjectSpec o;
  o.kind = ShapeKind::rectangle;
  o.center_x = 16;
  o.center_y = 20;
  o.width = 6;
  o.height = 8;
  o.color = {0.9f, 0.1f, 0.1f};
  o.removable = true;
  s.objects.push_back(o);
  return s;
}

bool same_spec(const SceneSpec& a, const SceneSpec& b) {
  if (a.objects.size() != b.objects.size()) return false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const auto& x = a.objects[i];
    const auto& y = b.objects[i];
    if (x.kind != y.kind || x.center_x != y.center_x || x.center_y != y.center_y || x.width != y.width ||
        x.height != y.height || x.color != y.color || x.removable != y.removable)
      return false;
  }
  return a.horizon == b.horizon && a.wall == b.wall && a.floor == b.floor && a.light.azimuth_deg == b.light.azimuth_deg &&
         a.light.shadow_factor == b.light.shadow_factor && a.light.shadow_length == b.light.shadow_length &&
         a.reflective == b.reflective && a.reflection_attenuation == b.reflection_attenuation;
}

}  // namespace

TEST_SUITE("scene-synth") {

TEST_CASE("same seed gives the same scene, different seeds differ") {
  CHECK(same_spec(sample_scene(42), sample_scene(42)));
  CHECK_FALSE(same_spec(sample_scene(0), sample_scene(1)));
  CHECK(render_pair(sample_scene(42)).factual == render_pair(sample_scene(42)).factual);
}

TEST_CASE("10000 sampled scenes keep the removable object in bounds") {
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const SceneSpec s = sample_scene(seed, seed % 2 ? 64 : 32);
    int removable = 0;
    for (const auto& o : s.objects) removable += o.removable ? 1 : 0;
    REQUIRE(removable == 1);
    const ObjectSpec& o = *s.removable();
    CHECK_NOTHROW(validate_object_placement(s, o));
    CHECK(o.width >= kMinObjectSize);
    CHECK(o.height >= kMinObjectSize);
    CHECK(o.bottom() > s.horizon_row());
    CHECK(o.bottom() <= s.height - kObjectMargin);
    CHECK(s.light.shadow_factor > 0.0);
    CHECK(s.light.shadow_factor < 1.0);
  }
}

TEST_CASE("without shadow or reflection only the mask changes") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneSpec s = sample_scene(seed, 32);
    s.light.shadow_factor = 1.0;
    s.reflective = false;
    const RenderedPair p = render_pair(s);
    CHECK(changed(p.factual, p.counterfactual).minus(p.mask).count() == 0);
    CHECK(p.mask.any());
  }
}

TEST_CASE("overhead light drops the shadow straight below the base") {
  const SceneSpec s = box_scene();
  const ObjectSpec& o = s.objects[0];
  const MaskBuffer sh = shadow_projection(s, o);
  REQUIRE(sh.any());
  const int base = static_cast<int>(o.bottom()) - 1;
  for (int y = 0; y < s.height; ++y) {
    int row = 0;
    for (int x = 0; x < s.width; ++x) {
      if (!sh.at(y, x)) continue;
      ++row;
      CHECK(y > base);
      CHECK(x >= 13);
      CHECK(x <= 18);
    }
    if (row > 0) CHECK(row == 6);
  }
}

TEST_CASE("pixels that change are exactly the mask, shadow and reflection") {
  std::size_t with_effects = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const RenderedPair p = render_pair(sample_scene(seed, seed % 3 ? 32 : 64));
    const MaskBuffer diff = changed(p.factual, p.counterfactual);
    const MaskBuffer footprint = p.regions.footprint();
    INFO("seed " << seed);
    CHECK(diff.minus(footprint).count() == 0);
    // Every region pixel is touched (a shadow multiplier < 1 or a reflection
    // blend always moves a non-black value); the silhouette can coincide with
    // the background color only by accident, so allow it there.
    CHECK(p.regions.effects().minus(diff).count() == 0);
    CHECK(p.mask == p.regions.silhouette);
    with_effects += p.regions.effects().any() ? 1 : 0;
  }
  CHECK(with_effects > 250);
}

TEST_CASE("1000 pairs are bit-identical outside mask and effects") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const RenderedPair p = render_pair(sample_scene(mix_seed(99, seed), 32));
    const MaskBuffer outside = p.regions.footprint().inverted();
    REQUIRE((changed(p.factual, p.counterfactual) & outside).count() == 0);
  }
}

TEST_CASE("stronger shadows never brighten a pixel") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SceneSpec a = sample_scene(seed, 32);
    a.reflective = false;
    SceneSpec b = a;
    b.light.shadow_factor = a.light.shadow_factor * 0.5;
    const ImageBuffer ia = render_scene(a, true);
    const ImageBuffer ib = render_scene(b, true);
    CHECK((ib.array() <= ia.array()).all());
  }
}

TEST_CASE("triplets") {
  const SceneSpec s = sample_scene(3, 32);
  const ObjectSpec& o = *s.removable();
  SUBCASE("same position twice gives the same image") {
    const auto t = render_triplet(s, {o.center_x, o.center_y}, {o.center_x, o.center_y});
    CHECK(t.with_a == t.with_b);
    CHECK(t.mask_a == t.mask_b);
  }
  SUBCASE("background is the counterfactual and B only touches its own regions") {
    const auto move = sample_move(s, 5);
    REQUIRE(move.has_value());
    const auto t = render_triplet(s, {o.center_x, o.center_y}, {o.center_x + (*move)[0], o.center_y + (*move)[1]});
    CHECK(t.background == render_pair(s).counterfactual);
    CHECK((changed(t.with_b, t.background) & t.regions_b.footprint().inverted()).count() == 0);
    CHECK(t.mask_b == t.mask_a.translated((*move)[0], (*move)[1]));
  }
  SUBCASE("positions off the floor are rejected") {
    CHECK_THROWS_AS(render_triplet(s, {o.center_x, o.center_y}, {o.center_x, 1.0}), ArgumentError);
  }
}

TEST_CASE("naive paste") {
  ImageBuffer bg(2, 3, 0.2f);
  ImageBuffer src(2, 3, 0.8f);
  CHECK(naive_paste(bg, src, MaskBuffer(2, 3, 1)) == src);
  CHECK(naive_paste(bg, src, MaskBuffer(2, 3, 0)) == bg);
  MaskBuffer one(2, 3);
  one.at(1, 2) = 1;
  const ImageBuffer out = naive_paste(bg, src, one);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) CHECK(out.at(c, y, x) == (y == 1 && x == 2 ? 0.8f : 0.2f));
  CHECK_THROWS_AS(naive_paste(bg, ImageBuffer(3, 3), one), ShapeError);
}

TEST_CASE("render_pair needs a removable object") {
  SceneSpec s = box_scene();
  s.objects[0].removable = false;
  CHECK_THROWS_AS(render_pair(s), ArgumentError);
}

}  // TEST_SUITE

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "cfedit/config.hpp"
#include "cfedit/train.hpp"

using namespace cfedit;

TEST_SUITE("cli") {

TEST_CASE("config hash ignores key order and comments") {
  const RunConfig a = RunConfig::resolve(RunConfig::parse("seed = 3\ntau = 0.1\n"), {});
  const RunConfig b = RunConfig::resolve(RunConfig::parse("# x\ntau=0.1   # y\n\nseed=3"), {});
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() != RunConfig::defaults("full").hash());
}

TEST_CASE("flags override the file, which overrides the profile") {
  const RunConfig c = RunConfig::resolve(RunConfig::parse("profile = fast\nseed = 3\ntau = 0.1"), {{"seed", "4"}});
  CHECK(c.get("profile") == "fast");
  CHECK(c.seed() == 4);
  CHECK(c.get_double("tau") == 0.1);
  CHECK(c.get_int("resolution") == 32);
  CHECK(RunConfig::resolve({}, {{"profile", "fast"}}).get_int("resolution") == 32);
  CHECK(RunConfig::resolve({}, {}).get_int("resolution") == 64);
}

TEST_CASE("unknown keys, profiles and malformed values are rejected") {
  CHECK_THROWS_AS(RunConfig::resolve({{"taus", "1"}}, {}), ArgumentError);
  CHECK_THROWS_AS(RunConfig::resolve({}, {{"profile", "medium"}}), ArgumentError);
  CHECK_THROWS_AS(RunConfig::parse("seed 3"), ArgumentError);
  CHECK_THROWS_AS(RunConfig::resolve({{"seed", "x"}}, {}).seed(), ArgumentError);
  CHECK_THROWS_AS(RunConfig::resolve({{"channel_mult", ""}}, {}).get_list("channel_mult"), ArgumentError);
}

TEST_CASE("filter defaults") {
  for (const char* p : {"full", "fast"}) {
    const BootstrapConfig b = RunConfig::defaults(p).bootstrap_config();
    CHECK(b.area.min_area == 0.05);
    CHECK(b.area.max_area == 0.50);
    CHECK(b.area.max_bottom_fraction == 0.20);
    CHECK(b.tau == 0.05);
    CHECK(b.min_frac == 0.005);
  }
}

TEST_CASE("stage configs") {
  const RunConfig c = RunConfig::defaults("full");
  const TrainConfig ft = c.train_config("finetune");
  const TrainConfig sc = c.train_config("scratch");
  CHECK(ft.steps == sc.steps);
  CHECK(ft.lr == sc.lr);
  CHECK(ft.seed != sc.seed);
  CHECK(sc.checkpoint_prefix == "insertion_scratch");
  CHECK(c.train_config("removal").lr_final < 0);
  CHECK_THROWS_AS(c.train_config("warmup"), ArgumentError);
}

TEST_CASE("cosine lr decays monotonically to lr_final") {
  const TrainConfig t = RunConfig::defaults("full").train_config("finetune");
  REQUIRE(t.lr_final > 0);
  CHECK(scheduled_lr(t, 0) == doctest::Approx(t.lr));
  CHECK(scheduled_lr(t, t.steps - 1) == doctest::Approx(t.lr_final));
  for (int s = 1; s < t.steps; ++s) CHECK(scheduled_lr(t, s) <= scheduled_lr(t, s - 1));
  TrainConfig flat = t;
  flat.lr_final = -1;
  CHECK(scheduled_lr(flat, 1234) == flat.lr);
}

}

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cfedit/rng.hpp"

namespace cfedit {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw IoError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

std::string pad_index(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

}  // namespace

std::string_view to_string(RecordKind v) {
  switch (v) {
    case RecordKind::removal_pair: return "removal_pair";
    case RecordKind::bootstrap_example: return "bootstrap_example";
    case RecordKind::triplet: return "triplet";
  }
  return "?";
}

std::string_view to_string(Split v) { return v == Split::train ? "train" : "heldout"; }
std::string_view to_string(Provenance v) { return v == Provenance::synthetic_gt ? "synthetic_gt" : "bootstrapped"; }

RecordKind parse_kind(std::string_view s) {
  return parse_enum(s, std::array{RecordKind::removal_pair, RecordKind::bootstrap_example, RecordKind::triplet}, "record kind");
}
Split parse_split(std::string_view s) { return parse_enum(s, std::array{Split::train, Split::heldout}, "split"); }
Provenance parse_provenance(std::string_view s) {
  return parse_enum(s, std::array{Provenance::synthetic_gt, Provenance::bootstrapped}, "provenance");
}

const std::string& ManifestRecord::path(const std::string& role) const {
  auto it = paths.find(role);
  if (it == paths.end()) throw IoError("record " + id + " has no '" + role + "' file");
  return it->second;
}

nlohmann::ordered_json to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["kind"] = to_string(r.kind);
  j["split"] = to_string(r.split);
  j["provenance"] = to_string(r.provenance);
  j["paths"] = r.paths;
  j["stats"] = {{"mask_area_fraction", r.stats.mask_area_fraction}, {"effect_area_fraction", r.stats.effect_area_fraction}};
  j["seed"] = r.seed;
  if (!r.meta.empty()) j["meta"] = r.meta;
  return j;
}

ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.kind = parse_kind(j.at("kind").get<std::string>());
  r.split = parse_split(j.at("split").get<std::string>());
  r.provenance = parse_provenance(j.at("provenance").get<std::string>());
  r.paths = j.at("paths").get<std::map<std::string, std::string>>();
  r.stats.mask_area_fraction = j.at("stats").at("mask_area_fraction").get<double>();
  r.stats.effect_area_fraction = j.at("stats").at("effect_area_fraction").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("meta")) r.meta = j.at("meta");
  return r;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& root) {
  DatasetManifest m(root);
  std::ifstream is(m.manifest_path());
  if (!is) return m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.records_.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      // An interrupted append can leave a partial final line; anything else is corruption.
      if (is.peek() == std::char_traits<char>::eof()) break;
      throw IoError(m.manifest_path().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

std::vector<const ManifestRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records_) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

std::vector<const ManifestRecord*> DatasetManifest::of_kind(RecordKind k, Split s) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records_) {
    if (r.kind == k && r.split == s) out.push_back(&r);
  }
  return out;
}

const ManifestRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records_) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

void DatasetManifest::append(ManifestRecord record) {
  std::filesystem::create_directories(root_);
  std::ofstream os(manifest_path(), std::ios::app | std::ios::binary);
  if (!os) throw IoError("cannot append to " + manifest_path().string());
  os << to_json(record).dump() << '\n';
  os.flush();
  if (!os) throw IoError("failed appending to " + manifest_path().string());
  records_.push_back(std::move(record));
}

void DatasetManifest::save() const {
  std::filesystem::create_directories(root_);
  const auto tmp = manifest_path().string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    for (const auto& r : records_) os << to_json(r).dump() << '\n';
    if (!os) throw IoError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, manifest_path());
}

ImageBuffer DatasetManifest::image(const ManifestRecord& r, const std::string& role) const {
  return read_ppm(root_ / r.path(role));
}

MaskBuffer DatasetManifest::mask(const ManifestRecord& r, const std::string& role) const {
  return read_pgm(root_ / r.path(role));
}

void store_image(const std::filesystem::path& root, ManifestRecord& r, const std::string& role, const ImageBuffer& img) {
  const std::string rel = "images/" + r.id + "_" + role + ".ppm";
  write_ppm(root / rel, img);
  r.paths[role] = rel;
}

void store_mask(const std::filesystem::path& root, ManifestRecord& r, const std::string& role, const MaskBuffer& mask) {
  const std::string rel = role == "mask" ? "masks/" + r.id + ".pgm" : "masks/" + r.id + "_" + role + ".pgm";
  write_pgm(root / rel, mask);
  r.paths[role] = rel;
}

std::uint64_t item_seed(std::uint64_t global, SeedDomain domain, std::uint64_t index) {
  return mix_seed(mix_seed(global, static_cast<std::uint64_t>(domain)), index);
}

namespace {

void prepare_dir(const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create dataset directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

}  // namespace

DatasetManifest generate_counterfactual_dataset(int n_train, int n_heldout, std::uint64_t seed,
                                                const std::filesystem::path& out_dir, int resolution) {
  if (n_train <= 0 || n_heldout <= 0) throw ArgumentError("generate_counterfactual_dataset: split sizes must be > 0");
  prepare_dir(out_dir);
  DatasetManifest m(out_dir);
  const auto total = static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_heldout);
  for (std::size_t i = 0; i < total; ++i) {
    ManifestRecord r;
    r.id = "pair_" + pad_index(i);
    r.kind = RecordKind::removal_pair;
    r.split = i < static_cast<std::size_t>(n_train) ? Split::train : Split::heldout;
    r.provenance = Provenance::synthetic_gt;
    r.seed = item_seed(seed, SeedDomain::pairs, i);
    const SceneSpec scene = sample_scene(r.seed, resolution);
    const RenderedPair pair = render_pair(scene);
    store_image(out_dir, r, "factual", pair.factual);
    store_image(out_dir, r, "counterfactual", pair.counterfactual);
    store_mask(out_dir, r, "mask", pair.mask);
    store_mask(out_dir, r, "effects", pair.regions.effects());
    r.stats = {pair.mask.area_fraction(), pair.regions.effects().area_fraction()};
    m.add(std::move(r));
  }
  m.save();
  return m;
}

DatasetManifest generate_source_corpus(int n, std::uint64_t seed, const std::filesystem::path& out_dir, int resolution) {
  if (n < 0) throw ArgumentError("generate_source_corpus: n must be >= 0");
  prepare_dir(out_dir);
  DatasetManifest m(out_dir);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    ManifestRecord r;
    r.id = "src_" + pad_index(i);
    r.kind = RecordKind::removal_pair;
    r.split = Split::train;
    r.seed = item_seed(seed, SeedDomain::source, i);
    const SceneSpec scene = sample_scene(r.seed, resolution);
    const ObjectRegions regions = object_regions(scene, *scene.removable());
    store_image(out_dir, r, "factual", render_scene(scene, true));
    store_mask(out_dir, r, "mask", regions.silhouette);
    r.stats = {regions.silhouette.area_fraction(), regions.effects().area_fraction()};
    r.meta["unlabeled"] = true;
    m.add(std::move(r));
  }
  m.save();
  return m;
}

DatasetManifest generate_triplets(int n, std::uint64_t seed, const std::filesystem::path& out_dir, int resolution) {
  if (n <= 0) throw ArgumentError("generate_triplets: n must be > 0");
  prepare_dir(out_dir);
  DatasetManifest m(out_dir);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    const std::uint64_t base = item_seed(seed, SeedDomain::triplets, i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t scene_seed = attempt == 0 ? base : mix_seed(base, attempt);
      const SceneSpec scene = sample_scene(scene_seed, resolution);
      const auto move = sample_move(scene, mix_seed(scene_seed, 0x6d6f7665));
      if (!move) continue;
      const ObjectSpec& obj = *scene.removable();
      const RenderedTriplet t = render_triplet(scene, {obj.center_x, obj.center_y},
                                               {obj.center_x + (*move)[0], obj.center_y + (*move)[1]});
      ManifestRecord r;
      r.id = "triplet_" + pad_index(i);
      r.kind = RecordKind::triplet;
      r.split = Split::heldout;
      r.seed = scene_seed;
      store_image(out_dir, r, "background", t.background);
      store_image(out_dir, r, "with_a", t.with_a);
      store_image(out_dir, r, "with_b", t.with_b);
      store_mask(out_dir, r, "mask", t.mask_a);
      store_mask(out_dir, r, "mask_b", t.mask_b);
      store_mask(out_dir, r, "effects_a", t.regions_a.effects());
      store_mask(out_dir, r, "effects_b", t.regions_b.effects());
      r.stats = {t.mask_a.area_fraction(), t.regions_a.effects().area_fraction()};
      r.meta["dx"] = (*move)[0];
      r.meta["dy"] = (*move)[1];
      m.add(std::move(r));
      break;
    }
  }
  m.save();
  return m;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t epoch_seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed);
  shuffle(order, rng);
  return order;
}

std::vector<std::vector<const ManifestRecord*>> iterate_batches(const DatasetManifest& manifest, Split split,
                                                                int batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ArgumentError("iterate_batches: batch_size must be >= 1");
  const auto records = manifest.split(split);
  if (records.empty()) throw ArgumentError("iterate_batches: split '" + std::string(to_string(split)) + "' is empty");
  const auto order = epoch_order(records.size(), epoch_seed);
  std::vector<std::vector<const ManifestRecord*>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const ManifestRecord*> batch;
    for (std::size_t j = start; j < std::min(order.size(), start + static_cast<std::size_t>(batch_size)); ++j) {
      batch.push_back(records[order[j]]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

DatasetManifest train_subset(const DatasetManifest& manifest, std::size_t n) {
  DatasetManifest out(manifest.root());
  std::size_t taken = 0;
  for (const auto& r : manifest.records()) {
    if (r.split == Split::train) {
      if (taken == n) continue;
      ++taken;
    }
    out.add(r);
  }
  if (taken < n) {
    throw ArgumentError("train_subset: requested " + std::to_string(n) + " pairs but only " + std::to_string(taken) +
                        " are available");
  }
  return out;
}

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfedit/image.hpp"
#include "cfedit/scene.hpp"

namespace cfedit {

enum class RecordKind { removal_pair, bootstrap_example, triplet };
enum class Split { train, heldout };
enum class Provenance { synthetic_gt, bootstrapped };

std::string_view to_string(RecordKind v);
std::string_view to_string(Split v);
std::string_view to_string(Provenance v);
RecordKind parse_kind(std::string_view s);
Split parse_split(std::string_view s);
Provenance parse_provenance(std::string_view s);

struct RecordStats {
  double mask_area_fraction = 0;
  double effect_area_fraction = 0;
};

/// One manifest line. `paths` maps a role ("factual", "mask", ...) to a path
/// relative to the dataset root. Image roles end in .ppm, mask roles in .pgm.
struct ManifestRecord {
  std::string id;
  RecordKind kind = RecordKind::removal_pair;
  Split split = Split::train;
  Provenance provenance = Provenance::synthetic_gt;
  std::map<std::string, std::string> paths;
  RecordStats stats;
  std::uint64_t seed = 0;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  const std::string& path(const std::string& role) const;
};

nlohmann::ordered_json to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const nlohmann::json& j);

inline constexpr const char* kManifestFile = "manifest.jsonl";

/// JSON-lines index of a dataset directory.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::filesystem::path root) : root_(std::move(root)) {}

  /// Reads <root>/manifest.jsonl; a missing file gives an empty manifest.
  static DatasetManifest load(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<ManifestRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  std::vector<const ManifestRecord*> split(Split s) const;
  std::vector<const ManifestRecord*> of_kind(RecordKind k, Split s) const;
  const ManifestRecord* find(const std::string& id) const;

  /// Appends in memory and as one flushed line on disk.
  void append(ManifestRecord record);
  /// Rewrites the manifest file from memory (write + rename).
  void save() const;
  void add(ManifestRecord record) { records_.push_back(std::move(record)); }

  std::filesystem::path manifest_path() const { return root_ / kManifestFile; }

  ImageBuffer image(const ManifestRecord& r, const std::string& role) const;
  MaskBuffer mask(const ManifestRecord& r, const std::string& role = "mask") const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestRecord> records_;
};

/// Writes an image/mask under the dataset layout and records its relative path.
void store_image(const std::filesystem::path& root, ManifestRecord& r, const std::string& role, const ImageBuffer& img);
void store_mask(const std::filesystem::path& root, ManifestRecord& r, const std::string& role, const MaskBuffer& mask);

/// Domain-separated per-item scene seeds so the supervised set, the bootstrap
/// source corpus and the triplets never share a scene.
enum class SeedDomain : std::uint64_t { pairs = 1, source = 2, triplets = 3 };
std::uint64_t item_seed(std::uint64_t global, SeedDomain domain, std::uint64_t index);

/// n_train + n_heldout rendered pairs, train records first.
DatasetManifest generate_counterfactual_dataset(int n_train, int n_heldout, std::uint64_t seed,
                                                const std::filesystem::path& out_dir, int resolution = 64);

/// Unlabeled factual images with their object masks (bootstrap input).
DatasetManifest generate_source_corpus(int n, std::uint64_t seed, const std::filesystem::path& out_dir, int resolution = 64);

/// Held-out (background, object at A, object at B) triplets.
DatasetManifest generate_triplets(int n, std::uint64_t seed, const std::filesystem::path& out_dir, int resolution = 64);

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t epoch_seed);

/// One epoch of batches over a split; the last batch may be short.
std::vector<std::vector<const ManifestRecord*>> iterate_batches(const DatasetManifest& manifest, Split split,
                                                                int batch_size, std::uint64_t epoch_seed);

/// First `n` train records in manifest order; subsets of increasing n nest.
DatasetManifest train_subset(const DatasetManifest& manifest, std::size_t n);

}  // namespace cfedit

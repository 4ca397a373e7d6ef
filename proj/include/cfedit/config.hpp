// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfedit/bootstrap.hpp"
#include "cfedit/train.hpp"

namespace cfedit {

/// Flat key = value run configuration. Every key has a profile default;
/// unknown keys are rejected. The canonical form lists keys sorted, so the
/// hash does not depend on the order keys were written in.
class RunConfig {
 public:
  /// "fast" (32x32, CI-sized) or "full" (64x64, desk-sized).
  static RunConfig defaults(std::string_view profile = "full");

  /// Parses `key = value` lines; '#' starts a comment.
  static std::map<std::string, std::string> parse(std::string_view text);
  static std::map<std::string, std::string> read_file(const std::filesystem::path& path);

  /// Precedence: flags > file > profile defaults. The profile itself is taken
  /// from the flags, then the file, then "full".
  static RunConfig resolve(const std::map<std::string, std::string>& file_values,
                           const std::map<std::string, std::string>& flag_values);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.contains(key); }

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<int> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string serialize() const;
  /// 16 hex digits of FNV-1a over serialize().
  std::string hash() const;
  /// <dir>/config.txt
  void write(const std::filesystem::path& dir) const;

  DenoiserConfig model_config() const;
  /// stage: removal, baseline, pretrain, finetune, scratch.
  TrainConfig train_config(const std::string& stage) const;
  BootstrapConfig bootstrap_config() const;
  int sampler_steps() const { return get_int("sampler_steps"); }
  std::uint64_t seed() const { return get_u64("seed"); }

 private:
  std::map<std::string, std::string> values_;
};

inline constexpr const char* kConfigFile = "config.txt";

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace cfedit

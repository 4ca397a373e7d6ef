// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cfedit {

namespace {

using Table = std::map<std::string, std::string>;

Table full_profile() {
  return {
      {"profile", "full"},
      {"seed", "0"},
      {"out", "runs/default"},
      {"resolution", "64"},
      {"n_train", "2000"},
      {"n_heldout", "100"},
      {"n_source", "5000"},
      {"n_triplets", "100"},
      {"timesteps", "1000"},
      {"base_channels", "32"},
      {"channel_mult", "1,2,4"},
      {"sampler_steps", "50"},
      {"eval_batch", "8"},
      {"removal_steps", "20000"},
      {"removal_batch", "16"},
      {"removal_lr", "1e-4"},
      {"removal_lr_final", "-1"},
      {"baseline_steps", "20000"},
      {"baseline_batch", "16"},
      {"baseline_lr", "1e-4"},
      {"baseline_lr_final", "-1"},
      {"pretrain_steps", "30000"},
      {"pretrain_batch", "16"},
      {"pretrain_lr", "1e-4"},
      {"pretrain_lr_final", "-1"},
      {"finetune_steps", "8000"},
      {"finetune_batch", "16"},
      {"finetune_lr", "5e-5"},
      {"finetune_lr_final", "5e-6"},
      {"checkpoint_every", "5000"},
      {"log_every", "0"},
      {"tau", "0.05"},
      {"min_frac", "0.005"},
      {"min_area", "0.05"},
      {"max_area", "0.50"},
      {"max_bottom_fraction", "0.20"},
      {"boundary_band_rows", "1"},
      {"ablation_sizes", "250,500,1000,2000"},
  };
}

Table fast_profile() {
  Table t = full_profile();
  const Table fast = {
      {"profile", "fast"},
      {"resolution", "32"},
      {"n_source", "1500"},
      {"base_channels", "32"},
      {"removal_steps", "3000"},
      {"removal_batch", "8"},
      {"removal_lr", "1e-3"},
      {"removal_lr_final", "1e-5"},
      {"baseline_steps", "3000"},
      {"baseline_batch", "8"},
      {"baseline_lr", "1e-3"},
      {"baseline_lr_final", "1e-5"},
      {"pretrain_steps", "3000"},
      {"pretrain_batch", "8"},
      {"pretrain_lr", "1e-3"},
      {"pretrain_lr_final", "1e-5"},
      {"finetune_steps", "1000"},
      {"finetune_batch", "8"},
      {"finetune_lr", "5e-4"},
      {"finetune_lr_final", "1e-5"},
      {"checkpoint_every", "1000"},
  };
  for (const auto& [k, v] : fast) t[k] = v;
  return t;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ArgumentError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig RunConfig::defaults(std::string_view profile) {
  RunConfig c;
  if (profile == "full") {
    c.values_ = full_profile();
  } else if (profile == "fast") {
    c.values_ = fast_profile();
  } else {
    throw ArgumentError("unknown profile '" + std::string(profile) + "' (expected fast or full)");
  }
  return c;
}

Table RunConfig::parse(std::string_view text) {
  Table out;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ArgumentError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

Table RunConfig::read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

RunConfig RunConfig::resolve(const Table& file_values, const Table& flag_values) {
  std::string profile = "full";
  if (auto it = file_values.find("profile"); it != file_values.end()) profile = it->second;
  if (auto it = flag_values.find("profile"); it != flag_values.end()) profile = it->second;
  RunConfig c = defaults(profile);
  for (const auto& [k, v] : file_values) c.set(k, v);
  for (const auto& [k, v] : flag_values) c.set(k, v);
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ArgumentError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ArgumentError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

std::vector<int> RunConfig::get_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ArgumentError("config key '" + key + "': empty list");
  return out;
}

std::string RunConfig::serialize() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

void RunConfig::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / kConfigFile, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / kConfigFile).string());
  os << "# config_hash " << hash() << "\n" << serialize();
}

DenoiserConfig RunConfig::model_config() const {
  DenoiserConfig m;
  m.base_channels = get_int("base_channels");
  m.channel_mult = get_list("channel_mult");
  m.timesteps = get_int("timesteps");
  m.init_seed = mix_seed(seed(), 0x696e6974);
  return m;
}

TrainConfig RunConfig::train_config(const std::string& stage) const {
  const std::string prefix = stage == "scratch" ? "finetune" : stage;
  if (prefix != "removal" && prefix != "baseline" && prefix != "pretrain" && prefix != "finetune") {
    throw ArgumentError("unknown training stage '" + stage + "'");
  }
  TrainConfig t;
  t.steps = get_int(prefix + "_steps");
  t.batch = get_int(prefix + "_batch");
  t.lr = get_double(prefix + "_lr");
  t.lr_final = get_double(prefix + "_lr_final");
  t.checkpoint_every = get_int("checkpoint_every");
  t.log_every = get_int("log_every");
  t.checkpoint_prefix = stage == "baseline" ? "baseline" : stage == "removal" ? "removal" : "insertion_" + stage;
  t.seed = mix_seed(seed(), fnv1a64(stage));
  return t;
}

BootstrapConfig RunConfig::bootstrap_config() const {
  BootstrapConfig b;
  b.seed = mix_seed(seed(), fnv1a64("bootstrap"));
  b.tau = get_double("tau");
  b.min_frac = get_double("min_frac");
  b.area.min_area = get_double("min_area");
  b.area.max_area = get_double("max_area");
  b.area.max_bottom_fraction = get_double("max_bottom_fraction");
  b.area.band_rows = get_int("boundary_band_rows");
  b.sampler_steps = sampler_steps();
  b.batch = get_int("eval_batch");
  return b;
}

}  // namespace cfedit

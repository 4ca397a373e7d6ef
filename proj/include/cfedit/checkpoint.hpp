// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfedit/adam.hpp"

namespace cfedit {

// Binary weight container:
//   "CFWT" | u32 version | records...
//   record = u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 payload
// All integers and floats little-endian. Optimizer tensors use the "/opt/" prefix.

inline constexpr char kCheckpointMagic[4] = {'C', 'F', 'W', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

void write_tensor_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_tensor_container(const std::filesystem::path& path);

/// Serializes parameters (and optionally Adam state) as float32.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter<Scalar>> params,
                     const AdamState<Scalar>* adam = nullptr) {
  std::vector<NamedTensor> records;
  for (const auto& p : params) records.push_back({p.name, p.value.template cast<float>()});
  if (adam != nullptr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      records.push_back({"/opt/m/" + params[i].name, adam->m[i].template cast<float>()});
      records.push_back({"/opt/v/" + params[i].name, adam->v[i].template cast<float>()});
    }
    records.push_back({"/opt/step", Tensor<float>({1}, {static_cast<float>(adam->step)})});
    records.push_back({"/opt/hyper", Tensor<float>({3}, {static_cast<float>(adam->beta1), static_cast<float>(adam->beta2),
                                                         static_cast<float>(adam->eps)})});
  }
  write_tensor_container(path, records);
}

/// Loads parameter values by name; shapes must match exactly. Returns the Adam
/// state when the file carries one.
template <typename Scalar>
std::optional<AdamState<Scalar>> load_checkpoint(const std::filesystem::path& path, std::span<Parameter<Scalar>> params) {
  const auto records = read_tensor_container(path);
  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const auto& r : records) {
      if (r.name == name) return &r;
    }
    return nullptr;
  };
  for (auto& p : params) {
    const NamedTensor* r = find(p.name);
    if (r == nullptr) throw IoError("checkpoint " + path.string() + ": missing parameter '" + p.name + "'");
    require_same_shape(p.value.shape(), r->tensor.shape(), ("checkpoint parameter '" + p.name + "'").c_str());
    p.value = r->tensor.template cast<Scalar>();
    p.zero_grad();
  }
  const NamedTensor* step = find("/opt/step");
  if (step == nullptr) return std::nullopt;
  AdamState<Scalar> adam;
  adam.step = static_cast<std::int64_t>(step->tensor[0]);
  if (const NamedTensor* hyper = find("/opt/hyper")) {
    adam.beta1 = static_cast<Scalar>(hyper->tensor[0]);
    adam.beta2 = static_cast<Scalar>(hyper->tensor[1]);
    adam.eps = static_cast<Scalar>(hyper->tensor[2]);
  }
  for (const auto& p : params) {
    const NamedTensor* m = find("/opt/m/" + p.name);
    const NamedTensor* v = find("/opt/v/" + p.name);
    if (m == nullptr || v == nullptr) throw IoError("checkpoint " + path.string() + ": missing optimizer state for '" + p.name + "'");
    adam.m.push_back(m->tensor.template cast<Scalar>());
    adam.v.push_back(v->tensor.template cast<Scalar>());
  }
  return adam;
}

}  // namespace cfedit

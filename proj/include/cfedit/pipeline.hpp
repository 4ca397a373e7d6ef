// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "cfedit/config.hpp"
#include "cfedit/eval.hpp"

namespace cfedit {

/// Stage output directories under the run root.
struct PipelineLayout {
  std::filesystem::path root;

  std::filesystem::path pairs() const { return root / "data" / "pairs"; }
  std::filesystem::path source() const { return root / "data" / "source"; }
  std::filesystem::path triplets() const { return root / "data" / "triplets"; }
  std::filesystem::path removal() const { return root / "removal"; }
  std::filesystem::path baseline() const { return root / "baseline"; }
  std::filesystem::path eval_removal() const { return root / "eval_removal"; }
  std::filesystem::path bootstrap() const { return root / "bootstrap"; }
  std::filesystem::path pretrain() const { return root / "insertion_pretrain"; }
  std::filesystem::path finetune() const { return root / "insertion_finetune"; }
  std::filesystem::path scratch() const { return root / "insertion_scratch"; }
  std::filesystem::path eval_insertion() const { return root / "eval_insertion"; }
};

struct PipelineResult {
  ComparisonReport removal;
  BootstrapSummary bootstrap;
  BootstrapAblationReport insertion;
};

EvalOptions eval_options(const RunConfig& cfg);

/// Data generation, removal and baseline training, removal eval, bootstrap,
/// insertion pretrain/finetune/scratch and the bootstrap ablation, all under
/// cfg "out". Writes config.txt into every stage directory and summary.json
/// at the root.
PipelineResult run_pipeline(const RunConfig& cfg);

}  // namespace cfedit

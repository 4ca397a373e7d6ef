// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include "cfedit/checkpoint.hpp"
#include "cfedit/dataset.hpp"

namespace cfedit {

double scheduled_lr(const TrainConfig& cfg, int step) {
  if (cfg.lr_final < 0 || cfg.steps <= 1) return cfg.lr;
  const double progress = static_cast<double>(step) / (cfg.steps - 1);
  return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

nlohmann::ordered_json config_json(const DenoiserConfig& cfg) {
  nlohmann::ordered_json j;
  j["in_channels"] = cfg.in_channels;
  j["out_channels"] = cfg.out_channels;
  j["base_channels"] = cfg.base_channels;
  j["channel_mult"] = cfg.channel_mult;
  j["timesteps"] = cfg.timesteps;
  j["init_seed"] = cfg.init_seed;
  return j;
}

DenoiserConfig config_from_json(const nlohmann::json& j) {
  DenoiserConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.out_channels = j.at("out_channels").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.channel_mult = j.at("channel_mult").get<std::vector<int>>();
  cfg.timesteps = j.at("timesteps").get<int>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  return cfg;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) { return ckpt.string() + ".json"; }

void save_denoiser(const std::filesystem::path& ckpt, const Denoiser<float>& model, const AdamState<float>* adam,
                   const nlohmann::ordered_json& provenance, int step) {
  save_checkpoint<float>(ckpt, model.parameters(), adam);
  nlohmann::ordered_json j;
  j["model"] = config_json(model.config());
  j["schedule"] = {{"name", "cosine"}, {"T", model.config().timesteps}};
  j["parameterization"] = "epsilon";
  j["step"] = step;
  j["provenance"] = provenance;
  const auto side = sidecar_path(ckpt);
  std::ofstream os(side, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + side.string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_sidecar(const std::filesystem::path& ckpt) {
  const auto side = sidecar_path(ckpt);
  std::ifstream is(side);
  if (!is) throw IoError("missing checkpoint sidecar " + side.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(side.string() + ": " + e.what());
  }
}

Denoiser<float> load_denoiser(const std::filesystem::path& ckpt) {
  Denoiser<float> model(config_from_json(read_sidecar(ckpt).at("model")));
  load_checkpoint<float>(ckpt, model.parameters());
  return model;
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& dir, const std::string& prefix) {
  const std::string head = prefix + "_step";
  std::filesystem::path best;
  long best_step = -1;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with(head) || !name.ends_with(".ckpt")) continue;
    const std::string digits = name.substr(head.size(), name.size() - head.size() - 5);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    const long step = std::stol(digits);
    if (step > best_step) {
      best_step = step;
      best = entry.path();
    }
  }
  if (best_step < 0) throw IoError("no " + head + "*.ckpt in " + dir.string());
  return best;
}

TrainResult train_denoiser(Denoiser<float>& model, const NoiseSchedule& sched, std::size_t n_examples,
                           const ExampleSource& source, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                           const nlohmann::ordered_json& provenance) {
  if (n_examples == 0) throw ArgumentError("train_denoiser: no training examples");
  if (cfg.batch < 1 || cfg.steps < 0) throw ArgumentError("train_denoiser: need batch >= 1 and steps >= 0");
  if (model.config().timesteps != sched.T) {
    throw ArgumentError("train_denoiser: model embeds T = " + std::to_string(model.config().timesteps) +
                        " but the schedule has T = " + std::to_string(sched.T));
  }
  const bool write = !out_dir.empty();
  std::ofstream csv;
  if (write) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir / (cfg.checkpoint_prefix + "_loss.csv"), std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write loss log in " + out_dir.string());
    csv << "step,loss,lr\n";
  }
  auto checkpoint = [&](int step, const AdamState<float>& adam) {
    const auto path = out_dir / (cfg.checkpoint_prefix + "_step" + std::to_string(step) + ".ckpt");
    save_denoiser(path, model, &adam, provenance, step);
    return path;
  };

  TrainResult result;
  AdamState<float> adam = AdamState<float>::for_params(std::as_const(model).parameters());
  Tape<float> tape;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  double reference = 0;
  int above = 0;
  const auto started = std::chrono::steady_clock::now();

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<ImageBuffer> targets;
    std::vector<ImageBuffer> conditions;
    std::vector<MaskBuffer> masks;
    for (int j = 0; j < cfg.batch; ++j) {
      if (cursor == order.size()) {
        order = epoch_order(n_examples, mix_seed(cfg.seed, epoch++));
        cursor = 0;
        // The epoch's final short batch ends the step early.
        if (j > 0) break;
      }
      Rng rng(mix_seed(mix_seed(cfg.seed ^ 0x6578616d706c65ULL, static_cast<std::uint64_t>(step)), static_cast<std::uint64_t>(j)));
      TrainExample ex = source(order[cursor++], rng);
      targets.push_back(std::move(ex.target));
      conditions.push_back(std::move(ex.condition));
      masks.push_back(std::move(ex.mask));
    }
    const Tensor<float> target = images_to_tensor(targets);
    const Tensor<float> condition = model.condition_channels() == 0
                                        ? Tensor<float>({target.dim(0), 0, target.dim(2), target.dim(3)})
                                        : edit_condition(conditions, masks);
    Rng noise_rng(mix_seed(cfg.seed ^ 0x6e6f697365ULL, static_cast<std::uint64_t>(step)));
    model.zero_grad();
    const float loss = loss_step<float>(model, tape, target, condition, sched, noise_rng);
    const double lr = scheduled_lr(cfg, step);
    adam_step<float>(model.parameters(), adam, static_cast<float>(lr));
    result.losses.push_back(loss);
    result.lrs.push_back(lr);
    if (write) csv << step << ',' << loss << ',' << lr << '\n';

    if (step < cfg.divergence_reference) {
      reference += loss / static_cast<double>(cfg.divergence_reference);
    } else {
      above = loss > cfg.divergence_factor * reference ? above + 1 : 0;
      if (above >= cfg.divergence_patience) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": loss " + std::to_string(loss) +
                               " above " + std::to_string(cfg.divergence_factor) + "x initial " + std::to_string(reference) +
                               " for " + std::to_string(above) + " steps");
      }
    }
    if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      double recent = 0;
      const int window = std::min(cfg.log_every, step + 1);
      for (int k = step + 1 - window; k <= step; ++k) recent += result.losses[static_cast<std::size_t>(k)];
      std::clog << cfg.checkpoint_prefix << " step " << step + 1 << "/" << cfg.steps << " loss " << recent / window
                << " lr " << lr << " (" << secs << " s)\n";
    }
    if (write && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 != cfg.steps) {
      csv.flush();
      checkpoint(step + 1, adam);
    }
  }
  if (write) {
    csv.flush();
    result.checkpoint = checkpoint(cfg.steps, adam);
  }
  return result;
}

}  // namespace cfedit

// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfedit/pipeline.hpp"
#include "cfedit/runtime.hpp"

namespace fs = std::filesystem;
using namespace cfedit;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// Flags shared by every subcommand. Subcommand flags that mirror config keys
// land in `flags` and win over the --config file.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "key = value config file");
  sub->add_option_function<std::string>("--profile", [&c](const std::string& v) { c.flags["profile"] = v; },
                                        "fast or full");
  sub->add_option_function<std::string>("--out", [&c](const std::string& v) { c.flags["out"] = v; }, "output root");
  sub->add_option_function<std::uint64_t>("--seed", [&c](std::uint64_t v) { c.flags["seed"] = std::to_string(v); },
                                          "global seed");
  sub->add_option("--set", c.sets, "override any config key (key=value)");
  sub->add_option("--threads", c.threads, "worker cap (falls back to CF_THREADS)")->check(CLI::PositiveNumber);
}

// Adds `--name` writing config key `key`.
template <typename T>
void key_flag(CLI::App* sub, Common& c, const std::string& name, const std::string& key, const std::string& help) {
  sub->add_option_function<T>(name, [&c, key](const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.flags[key] = v;
    } else {
      std::ostringstream os;
      os << v;
      c.flags[key] = os.str();
    }
  }, help);
}

RunConfig resolve(const Common& c) {
  std::map<std::string, std::string> file;
  if (!c.config_file.empty()) file = RunConfig::read_file(c.config_file);
  std::map<std::string, std::string> flags = c.flags;
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
    flags[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return RunConfig::resolve(file, flags);
}

int thread_cap(const Common& c) {
  if (c.threads > 0) return c.threads;
  if (const char* env = std::getenv("CF_THREADS"); env != nullptr && *env != '\0') {
    const int n = std::atoi(env);
    if (n < 1) throw ArgumentError(std::string("CF_THREADS must be a positive integer, got '") + env + "'");
    return n;
  }
  return 1;
}

fs::path out_root(const RunConfig& cfg) { return cfg.get("out"); }

nlohmann::ordered_json provenance(const RunConfig& cfg) {
  nlohmann::ordered_json p;
  p["config_hash"] = cfg.hash();
  p["config"] = cfg.values();
  return p;
}

DatasetManifest load_dataset(const std::string& dir) {
  DatasetManifest m = DatasetManifest::load(dir);
  if (m.size() == 0) throw IoError("no records in " + (fs::path(dir) / kManifestFile).string());
  return m;
}

void print_summary(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Counterfactual object removal and insertion with pixel-space diffusion"};
  app.require_subcommand(1);

  Common c;
  std::function<void()> run;

  // gen-data
  std::string kind = "pairs";
  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  add_common(gen, c);
  key_flag<int>(gen, c, "--train", "n_train", "training pairs");
  key_flag<int>(gen, c, "--heldout", "n_heldout", "held-out pairs");
  key_flag<int>(gen, c, "--source", "n_source", "unlabeled source images");
  key_flag<int>(gen, c, "--triplets", "n_triplets", "held-out move triplets");
  key_flag<int>(gen, c, "--resolution", "resolution", "image side");
  gen->add_option("--kind", kind, "pairs, source, triplets or all")
      ->check(CLI::IsMember({"pairs", "source", "triplets", "all"}));
  gen->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const fs::path out = out_root(cfg);
      const int res = cfg.get_int("resolution");
      const std::uint64_t seed = cfg.seed();
      const bool all = kind == "all";
      auto dir = [&](const char* sub) { return all ? out / "data" / sub : out; };
      std::size_t n = 0;
      if (all || kind == "pairs") {
        n += generate_counterfactual_dataset(cfg.get_int("n_train"), cfg.get_int("n_heldout"), seed, dir("pairs"), res).size();
        cfg.write(dir("pairs"));
      }
      if (all || kind == "source") {
        n += generate_source_corpus(cfg.get_int("n_source"), seed, dir("source"), res).size();
        cfg.write(dir("source"));
      }
      if (all || kind == "triplets") {
        n += generate_triplets(cfg.get_int("n_triplets"), seed, dir("triplets"), res).size();
        cfg.write(dir("triplets"));
      }
      std::cout << "wrote " << n << " records under " << out.string() << '\n';
    };
  });

  // train-removal / train-baseline
  std::string data_dir;
  auto add_train = [&](const char* name, const char* help, const std::string& stage) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, c);
    sub->add_option("--data", data_dir, "pairs dataset directory")->required();
    key_flag<int>(sub, c, "--steps", stage + "_steps", "optimizer steps");
    key_flag<int>(sub, c, "--batch", stage + "_batch", "batch size");
    key_flag<double>(sub, c, "--lr", stage + "_lr", "learning rate");
    sub->callback([&, stage] {
      run = [&, stage] {
        const RunConfig cfg = resolve(c);
        const DatasetManifest pairs = load_dataset(data_dir);
        const fs::path out = out_root(cfg);
        cfg.write(out);
        const TrainConfig tc = cfg.train_config(stage);
        const TrainResult r = stage == "removal"
                                  ? train_removal(pairs, cfg.model_config(), tc, out, nullptr, provenance(cfg))
                                  : train_inpaint_baseline(pairs, cfg.model_config(), tc, out, nullptr, provenance(cfg));
        std::cout << "final loss " << (r.losses.empty() ? 0.0f : r.losses.back()) << ", checkpoint "
                  << r.checkpoint.string() << '\n';
      };
    });
  };
  add_train("train-removal", "train the removal model on counterfactual pairs", "removal");
  add_train("train-baseline", "train the self-supervised inpainting baseline", "baseline");

  // bootstrap
  std::string removal_ckpt;
  std::string source_dir;
  long limit = -1;
  auto* boot = app.add_subcommand("bootstrap", "synthesize insertion examples from the source corpus");
  add_common(boot, c);
  boot->add_option("--removal-ckpt", removal_ckpt, "removal checkpoint")->required();
  boot->add_option("--source", source_dir, "source corpus directory")->required();
  key_flag<double>(boot, c, "--tau", "tau", "per-pixel change threshold");
  key_flag<double>(boot, c, "--min-frac", "min_frac", "minimum changed fraction outside the mask");
  boot->add_option("--limit", limit, "stop after this many new candidates");
  boot->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      Denoiser<float> removal = load_denoiser(removal_ckpt);
      const DatasetManifest source = load_dataset(source_dir);
      BootstrapConfig bc = cfg.bootstrap_config();
      bc.limit = limit;
      const fs::path out = out_root(cfg);
      cfg.write(out);
      const BootstrapSummary s = build_bootstrap_set(removal, make_schedule(removal.config().timesteps), source, out, bc);
      print_summary({{"candidates", s.candidates},
                     {"skipped_existing", s.skipped_existing},
                     {"area_rejected", s.area_rejected},
                     {"effect_rejected", s.effect_rejected},
                     {"accepted", s.accepted},
                     {"complete", s.complete}});
    };
  });

  // train-insertion
  std::string stage;
  std::string init_ckpt;
  bool allow_scratch = false;
  auto* ins = app.add_subcommand("train-insertion", "pretrain on bootstrap data or finetune on pairs");
  add_common(ins, c);
  ins->add_option("--stage", stage, "pretrain, finetune or scratch")
      ->required()
      ->check(CLI::IsMember({"pretrain", "finetune", "scratch"}));
  ins->add_option("--data", data_dir, "bootstrap directory (pretrain) or pairs directory")->required();
  ins->add_option("--init", init_ckpt, "checkpoint to finetune");
  ins->add_flag("--allow-scratch", allow_scratch, "finetune a checkpoint without pretrain lineage");
  int ins_steps = -1;
  int ins_batch = -1;
  ins->add_option("--steps", ins_steps, "optimizer steps")->check(CLI::NonNegativeNumber);
  ins->add_option("--batch", ins_batch, "batch size")->check(CLI::PositiveNumber);
  ins->callback([&] {
    run = [&] {
      const std::string keys = stage == "pretrain" ? "pretrain" : "finetune";
      if (ins_steps >= 0) c.flags[keys + "_steps"] = std::to_string(ins_steps);
      if (ins_batch > 0) c.flags[keys + "_batch"] = std::to_string(ins_batch);
      const RunConfig cfg = resolve(c);
      const DatasetManifest data = load_dataset(data_dir);
      const fs::path out = out_root(cfg);
      const TrainConfig tc = cfg.train_config(stage);
      TrainResult r;
      if (stage == "pretrain") {
        cfg.write(out);
        r = pretrain_insertion(data, cfg.model_config(), tc, out, nullptr, provenance(cfg));
      } else if (stage == "scratch") {
        if (!allow_scratch) throw ArgumentError("--stage scratch trains without bootstrap lineage; pass --allow-scratch");
        cfg.write(out);
        Denoiser<float> model = fresh_insertion_model(cfg.model_config());
        r = finetune_insertion(model, nullptr, data, tc, out, true, provenance(cfg));
      } else {
        if (init_ckpt.empty()) throw ArgumentError("--stage finetune needs --init <checkpoint>");
        Denoiser<float> model = load_denoiser(init_ckpt);
        const nlohmann::json lineage = read_sidecar(init_ckpt).value("provenance", nlohmann::json());
        cfg.write(out);
        r = finetune_insertion(model, lineage, data, tc, out, allow_scratch, provenance(cfg));
      }
      std::cout << "final loss " << (r.losses.empty() ? 0.0f : r.losses.back()) << ", checkpoint "
                << r.checkpoint.string() << '\n';
    };
  });

  // eval-removal
  std::string baseline_ckpt;
  auto* evr = app.add_subcommand("eval-removal", "score removal (and the baseline) on held-out pairs");
  add_common(evr, c);
  evr->add_option("--removal-ckpt", removal_ckpt, "removal checkpoint")->required();
  evr->add_option("--baseline-ckpt", baseline_ckpt, "inpainting baseline checkpoint");
  evr->add_option("--data", data_dir, "pairs dataset directory")->required();
  evr->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const DatasetManifest pairs = load_dataset(data_dir);
      const PairSet heldout = load_pairs(pairs, Split::heldout);
      if (heldout.size() == 0) throw ArgumentError("no held-out pairs in " + data_dir);
      Denoiser<float> removal = load_denoiser(removal_ckpt);
      const NoiseSchedule sched = make_schedule(removal.config().timesteps);
      const fs::path out = out_root(cfg);
      cfg.write(out);
      const EvalOptions opt = eval_options(cfg);
      if (baseline_ckpt.empty()) {
        const EvalReport r = eval_removal_model(removal, heldout, sched, opt, "removal");
        write_report(r, out, "removal_report");
        print_summary(r.summary());
      } else {
        Denoiser<float> baseline = load_denoiser(baseline_ckpt);
        print_summary(run_removal_eval(removal, baseline, heldout, sched, opt, out).delta);
      }
    };
  });

  // eval-insertion
  std::string ckpt;
  std::string triplet_dir;
  auto* evi = app.add_subcommand("eval-insertion", "score an insertion model on held-out triplets");
  add_common(evi, c);
  evi->add_option("--ckpt", ckpt, "insertion checkpoint")->required();
  evi->add_option("--triplets", triplet_dir, "triplet dataset directory")->required();
  evi->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const TripletSet t = load_triplets(load_dataset(triplet_dir));
      Denoiser<float> model = load_denoiser(ckpt);
      const fs::path out = out_root(cfg);
      cfg.write(out);
      const EvalReport r = eval_insertion_model(model, t, make_schedule(model.config().timesteps), eval_options(cfg), "insertion");
      const EvalReport naive = eval_naive_paste(t);
      write_report(r, out, "insertion_report");
      write_report(naive, out, "naive_paste_report");
      print_summary({{"insertion", r.summary()}, {"naive_paste", naive.summary()}});
    };
  });

  // ablate-size
  auto* abs = app.add_subcommand("ablate-size", "removal quality against training set size");
  add_common(abs, c);
  abs->add_option("--data", data_dir, "pairs dataset directory")->required();
  key_flag<std::string>(abs, c, "--sizes", "ablation_sizes", "comma-separated train subset sizes");
  abs->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const DatasetManifest pairs = load_dataset(data_dir);
      std::vector<std::size_t> sizes;
      for (int s : cfg.get_list("ablation_sizes")) {
        if (s < 0) throw ArgumentError("ablation sizes must be non-negative");
        sizes.push_back(static_cast<std::size_t>(s));
      }
      const fs::path out = out_root(cfg);
      cfg.write(out);
      const auto rows = run_dataset_size_ablation(pairs, sizes, cfg.model_config(), cfg.train_config("removal"),
                                                  eval_options(cfg), out);
      for (const auto& row : rows) std::cout << row.size << " pairs: PSNR " << row.report.psnr().mean << '\n';
    };
  });

  // ablate-bootstrap
  std::string with_ckpt;
  std::string without_ckpt;
  auto* abb = app.add_subcommand("ablate-bootstrap", "insertion with vs without bootstrap pretraining");
  add_common(abb, c);
  abb->add_option("--with-ckpt", with_ckpt, "pretrained + finetuned checkpoint")->required();
  abb->add_option("--without-ckpt", without_ckpt, "scratch-finetuned checkpoint")->required();
  abb->add_option("--triplets", triplet_dir, "triplet dataset directory")->required();
  abb->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const TripletSet t = load_triplets(load_dataset(triplet_dir));
      Denoiser<float> with_boot = load_denoiser(with_ckpt);
      Denoiser<float> without_boot = load_denoiser(without_ckpt);
      const fs::path out = out_root(cfg);
      cfg.write(out);
      const auto r = run_bootstrap_ablation(with_boot, without_boot, t, make_schedule(with_boot.config().timesteps),
                                            eval_options(cfg), out);
      print_summary(r.summary);
    };
  });

  // move
  std::string image_path;
  std::string mask_path;
  std::string run_dir;
  std::string insertion_ckpt;
  int dx = 0;
  int dy = 0;
  auto* mv = app.add_subcommand("move", "move an object within an image");
  add_common(mv, c);
  mv->add_option("--image", image_path, "input PPM")->required();
  mv->add_option("--mask", mask_path, "object mask PGM")->required();
  mv->add_option("--dx", dx, "column offset")->required();
  mv->add_option("--dy", dy, "row offset")->required();
  mv->add_option("--removal-ckpt", removal_ckpt, "removal checkpoint (default: latest under --run)");
  mv->add_option("--insertion-ckpt", insertion_ckpt, "insertion checkpoint (default: latest under --run)");
  mv->add_option("--run", run_dir, "pipeline run directory holding the checkpoints");
  mv->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const PipelineLayout at{run_dir.empty() ? out_root(cfg) : fs::path(run_dir)};
      const fs::path rm = removal_ckpt.empty() ? latest_checkpoint(at.removal(), "removal") : fs::path(removal_ckpt);
      const fs::path in =
          insertion_ckpt.empty() ? latest_checkpoint(at.finetune(), "insertion_finetune") : fs::path(insertion_ckpt);
      Denoiser<float> removal = load_denoiser(rm);
      Denoiser<float> insertion = load_denoiser(in);
      const MoveResult r = intra_image_move(removal, insertion, read_ppm(image_path), read_pgm(mask_path), dx, dy,
                                            make_schedule(removal.config().timesteps), cfg.seed(), cfg.sampler_steps());
      const fs::path out = out_root(cfg);
      cfg.write(out);
      write_ppm(out / "background.ppm", r.background);
      write_ppm(out / "pasted.ppm", r.pasted);
      write_ppm(out / "output.ppm", r.output);
      write_pgm(out / "moved_mask.pgm", r.moved_mask);
      std::cout << "wrote background.ppm, pasted.ppm, output.ppm under " << out.string() << '\n';
    };
  });

  // sample
  auto* smp = app.add_subcommand("sample", "run one checkpoint on an image and mask");
  add_common(smp, c);
  smp->add_option("--ckpt", ckpt, "checkpoint")->required();
  smp->add_option("--image", image_path, "conditioning PPM")->required();
  smp->add_option("--mask", mask_path, "mask PGM")->required();
  smp->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      Denoiser<float> model = load_denoiser(ckpt);
      const std::string kind_of = read_sidecar(ckpt).value("provenance", nlohmann::json::object()).value("stage", "");
      const NoiseSchedule sched = make_schedule(model.config().timesteps);
      const ImageBuffer image = read_ppm(image_path);
      const MaskBuffer mask = read_pgm(mask_path);
      // The baseline was trained on gray-filled holes; everything else sees the raw image.
      const ImageBuffer result = kind_of == "inpaint_baseline"
                                     ? inpaint(model, image, mask, sched, cfg.seed(), cfg.sampler_steps())
                                     : sample(model, image, mask, sched, cfg.seed(), cfg.sampler_steps());
      const fs::path out = out_root(cfg);
      cfg.write(out);
      write_ppm(out / "sample.ppm", result.quantized());
      std::cout << "wrote " << (out / "sample.ppm").string() << '\n';
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "every stage end to end under --out");
  add_common(pipe, c);
  pipe->callback([&] {
    run = [&] {
      const RunConfig cfg = resolve(c);
      const PipelineResult r = run_pipeline(cfg);
      print_summary({{"removal_vs_baseline", r.removal.delta}, {"bootstrap_ablation", r.insertion.summary}});
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    thread_cap(c);  // validated; everything runs on the calling thread
    run();
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

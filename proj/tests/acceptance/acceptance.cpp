// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. One PASS/FAIL line per criterion, INFO lines for
// the supporting measurements. Exits nonzero only when the harness itself
// breaks; a FAIL line is a result, not a crash.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cfedit/pipeline.hpp"
#include "cfedit/runtime.hpp"
#include "cfedit/scene.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace cfedit;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;
std::ofstream report_file;

void emit(const std::string& line) {
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  if (report_file.is_open()) report_file << line << "\n" << std::flush;
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  emit(std::string(pass ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + name + ": " + detail);
}

void info(const std::string& what) { emit("INFO " + what); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

double jnum(const nlohmann::json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

// ---------------------------------------------------------------- fast checks

void gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto& op : testing::op_suite(1000 + seed)) {
      const auto r = testing::gradcheck(op.params, op.graph, seed);
      checked += r.checked;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = op.name + " " + r.worst;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient oracle", worst < 1e-3 && secs < 60,
         fmt("max rel error %.3g over %zu entries (%s), %.1f s", worst, checked, where.c_str(), secs));
}

void schedule_invariants() {
  const auto t0 = Clock::now();
  const NoiseSchedule s = make_schedule(1000);
  bool ok = s.alpha[0] == 1.0 && s.sigma[0] == 0.0 && s.alpha[1000] <= 1e-3;
  double worst = 0;
  for (int t = 0; t <= 1000; ++t) {
    worst = std::max(worst, std::abs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0));
    if (t > 0) ok = ok && s.alpha[t] < s.alpha[t - 1] && s.sigma[t] > s.sigma[t - 1];
  }
  const double secs = seconds_since(t0);
  report(2, "schedule invariants", ok && worst <= 1e-6 && secs < 1,
         fmt("alpha_T %.3g, max |a^2+s^2-1| %.2g, monotone %s, %.3f s", s.alpha[1000], worst, ok ? "yes" : "no", secs));
}

void forward_statistics() {
  const NoiseSchedule s = make_schedule(1000);
  Rng rng(77);
  const auto draw = draw_noise<double>({10000, 1, 1, 1}, s, rng);
  const Tensor<double> zero({10000, 1, 1, 1});
  bool ok = true;
  std::string detail;
  for (int t : {100, 500, 900}) {
    const auto out = forward_diffuse(zero, t, draw.eps, s);
    const double mean = out.array().mean();
    const double ratio = (out.array() - mean).square().sum() / (out.size() - 1) / (s.sigma[t] * s.sigma[t]);
    ok = ok && ratio >= 0.95 && ratio <= 1.05;
    detail += fmt("t=%d var/sigma^2 %.4f; ", t, ratio);
  }
  report(3, "forward-process statistics", ok, detail);
}

void renderer_consistency() {
  std::size_t bad = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const RenderedPair p = render_pair(sample_scene(item_seed(4242, SeedDomain::pairs, i), 64));
    const MaskBuffer outside = p.regions.footprint().inverted();
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (!outside.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) bad += p.factual.at(c, y, x) != p.counterfactual.at(c, y, x) ? 1 : 0;
      }
    }
  }
  report(4, "renderer counterfactual consistency", bad == 0, fmt("%zu differing values outside mask/effects in 1000 pairs", bad));
}

void area_table() {
  const auto t0 = Clock::now();
  auto mask = [](int rows, int bottom) {
    MaskBuffer m(100, 100);
    for (int y = 10; y < 10 + rows; ++y)
      for (int x = 0; x < 100; ++x) m.at(y, x) = 1;
    for (int x = 0; x < bottom; ++x) m.at(99, x) = 1;
    return m;
  };
  std::string got;
  bool ok = true;
  for (auto [rows, want] : {std::pair{4, false}, {5, true}, {50, true}, {51, false}}) {
    const bool pass = area_filters(mask(rows, 0)).pass();
    ok = ok && pass == want;
    got += fmt("area %d%% %s; ", rows, pass ? "accept" : "reject");
  }
  for (auto [cols, want] : {std::pair{19, true}, {20, true}, {21, false}}) {
    const bool pass = area_filters(mask(20, cols)).pass();
    ok = ok && pass == want;
    got += fmt("bottom %d%% %s; ", cols, pass ? "accept" : "reject");
  }
  const double secs = seconds_since(t0);
  report(6, "area-filter boundary table", ok && secs < 1, got + fmt("%.3f s", secs));
}

void zero_init_invariance() {
  DenoiserConfig cfg;
  cfg.in_channels = kImageChannels;
  cfg.base_channels = 16;
  cfg.init_seed = 5;
  const Denoiser<float> wide = Denoiser<float>(cfg).expand_input_channels_zero_init(kEditConditionChannels);
  Rng rng(8);
  const Tensor<float> noisy = testing::random_tensor({4, 3, 32, 32}, rng).cast<float>();
  const std::vector<int> t = {1, 250, 600, 1000};
  Tensor<float> first;
  bool same = true;
  for (int k = 0; k < 5; ++k) {
    Tensor<float> cond = testing::random_tensor({4, 4, 32, 32}, rng, std::pow(10.0, k - 1)).cast<float>();
    Denoiser<float> m = wide;
    Tape<float> tape;
    const Tensor<float> out = m.predict(tape, tape.constant(noisy), cond, t).value();
    if (k == 0) first = out;
    else same = same && (out.array() == first.array()).all();
  }
  report(7, "zero-init invariance", same, "5 condition tensors, scales 0.1..1000, outputs bitwise equal: " + std::string(same ? "yes" : "no"));
}

// ------------------------------------------------------------ training runs

void overfit(const fs::path& work) {
  const fs::path dir = work / "overfit";
  fs::remove_all(dir);
  const DatasetManifest m = generate_counterfactual_dataset(8, 1, 7, dir / "pairs", 32);
  DenoiserConfig mc;
  mc.base_channels = 32;
  mc.init_seed = 1;
  TrainConfig tc;
  tc.steps = 5000;
  tc.batch = 8;
  tc.lr = 1e-3;
  tc.lr_final = 1e-5;
  tc.checkpoint_prefix = "removal";
  tc.seed = 2;
  Denoiser<float> model(mc);
  const auto t0 = Clock::now();
  train_removal(m, mc, tc, dir / "removal", &model);
  const double secs = seconds_since(t0);
  const PairSet pairs = load_pairs(m, Split::train);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < pairs.size(); ++i) seeds.push_back(eval_seed(3, i));
  const auto out = remove_batch(model, pairs.factual, pairs.masks, make_schedule(1000), seeds, 50);
  double total = 0;
  for (std::size_t i = 0; i < out.size(); ++i) total += psnr(out[i].quantized(), pairs.counterfactual[i]);
  const double mean = total / static_cast<double>(out.size());
  report(8, "overfit harness", mean >= 30.0 && secs <= 1800,
         fmt("8 pairs, 5000 steps at 32x32: mean training-pair removal PSNR %.2f dB, %.0f s", mean, secs));
}

struct SeedRun {
  std::uint64_t seed;
  fs::path root;
  double seconds;
};

RunConfig fast_config(std::uint64_t seed, const fs::path& out) {
  return RunConfig::resolve({}, {{"profile", "fast"}, {"seed", std::to_string(seed)}, {"out", out.string()}});
}

SeedRun pipeline_run(const fs::path& work, std::uint64_t seed, bool reuse) {
  SeedRun r{seed, work / ("seed_" + std::to_string(seed)), 0};
  const fs::path timing = work / ("seed_" + std::to_string(seed) + ".seconds");
  if (reuse && fs::exists(r.root / "summary.json") && fs::exists(timing)) {
    r.seconds = std::stod(slurp(timing));
    info(fmt("reusing %s", r.root.c_str()));
    return r;
  }
  fs::remove_all(r.root);
  const auto t0 = Clock::now();
  run_pipeline(fast_config(seed, r.root));
  r.seconds = seconds_since(t0);
  std::ofstream(timing) << r.seconds;
  info(fmt("seed %llu fast pipeline %.0f s", static_cast<unsigned long long>(seed), r.seconds));
  return r;
}

void bootstrap_identity(const std::vector<SeedRun>& runs) {
  std::size_t records = 0, bad = 0;
  for (const auto& run : runs) {
    const DatasetManifest m = DatasetManifest::load(PipelineLayout{run.root}.bootstrap());
    for (const auto& r : m.records()) {
      const ImageBuffer y = m.image(r, "input");
      const ImageBuffer x = m.image(r, "target");
      const ImageBuffer z = m.image(r, "removed");
      const MaskBuffer mask = m.mask(r);
      ++records;
      for (int i = 0; i < y.height(); ++i)
        for (int j = 0; j < y.width(); ++j)
          for (int c = 0; c < 3; ++c) bad += y.at(c, i, j) != (mask.at(i, j) ? x : z).at(c, i, j) ? 1 : 0;
    }
  }
  report(5, "paste identity over the bootstrap runs", bad == 0 && records > 0,
         fmt("%zu bootstrap records over %zu runs, %zu mismatched values", records, runs.size(), bad));
}

void removal_vs_baseline(const std::vector<SeedRun>& runs) {
  int wins = 0;
  double slowest = 0;
  std::string detail;
  for (const auto& run : runs) {
    const auto d = read_json(PipelineLayout{run.root}.eval_removal() / "removal_vs_baseline.json");
    const double dpsnr = jnum(d["psnr"]);
    const double dshadow = jnum(d["shadow_region_mae"]);
    const bool win = dpsnr >= 0.5 && dshadow < 0;
    wins += win ? 1 : 0;
    slowest = std::max(slowest, run.seconds);
    detail += fmt("seed %llu dPSNR %+.2f dB dShadowMAE %+.4f %s; ", static_cast<unsigned long long>(run.seed), dpsnr, dshadow,
                  win ? "win" : "loss");
  }
  report(9, "removal beats gray-fill inpainting", wins >= 2 && slowest <= 5400,
         detail + fmt("%d/%zu seeds, slowest fast pipeline %.0f s", wins, runs.size(), slowest));
}

void bootstrap_ablation(const std::vector<SeedRun>& runs) {
  int wins = 0;
  std::string detail;
  for (const auto& run : runs) {
    const auto j = read_json(PipelineLayout{run.root}.eval_insertion() / "bootstrap_ablation.json");
    const double with_without = jnum(j["with_vs_without"]["psnr"]);
    const double with_naive = jnum(j["with_vs_naive"]["psnr"]);
    const double without_naive = jnum(j["without_vs_naive"]["psnr"]);
    const bool win = with_without > 0 && with_naive > 0 && without_naive > 0;
    wins += win ? 1 : 0;
    detail += fmt("seed %llu with-without %+.2f, with-naive %+.2f, without-naive %+.2f dB; ",
                  static_cast<unsigned long long>(run.seed), with_without, with_naive, without_naive);
  }
  report(10, "bootstrap pretraining helps insertion", wins >= 2, detail + fmt("%d/%zu seeds", wins, runs.size()));
}

void size_ablation(const fs::path& work, const std::vector<SeedRun>& runs, bool reuse) {
  int wins = 0;
  bool nested = true;
  std::string detail;
  for (const auto& run : runs) {
    const RunConfig cfg = fast_config(run.seed, run.root);
    const PipelineLayout at{run.root};
    const DatasetManifest pairs = DatasetManifest::load(at.pairs());
    const DatasetManifest small = train_subset(pairs, 250);
    const DatasetManifest big = train_subset(pairs, 2000);
    std::vector<std::string> small_ids, big_ids;
    for (const auto& r : small.records()) if (r.split == Split::train) small_ids.push_back(r.id);
    for (const auto& r : big.records()) if (r.split == Split::train) big_ids.push_back(r.id);
    nested = nested && small_ids.size() == 250 && big_ids.size() >= 250 &&
             std::equal(small_ids.begin(), small_ids.end(), big_ids.begin());

    const fs::path dir = work / ("size_" + std::to_string(run.seed));
    double small_psnr = 0;
    if (reuse && fs::exists(dir / "size_250_report.json")) {
      small_psnr = jnum(read_json(dir / "size_250_report.json")["psnr"]["mean"]);
    } else {
      fs::remove_all(dir);
      const auto rows =
          run_dataset_size_ablation(pairs, {250}, cfg.model_config(), cfg.train_config("removal"), eval_options(cfg), dir);
      small_psnr = rows.front().report.psnr().mean;
    }
    const double big_psnr = jnum(read_json(at.eval_removal() / "removal_report.json")["psnr"]["mean"]);
    wins += big_psnr > small_psnr ? 1 : 0;
    detail += fmt("seed %llu 2000 pairs %.2f dB vs 250 pairs %.2f dB; ", static_cast<unsigned long long>(run.seed), big_psnr,
                  small_psnr);
  }
  report(11, "more training pairs help", wins >= 2 && nested,
         detail + fmt("nested %s, %d/%zu seeds", nested ? "yes" : "no", wins, runs.size()));
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

void determinism(const fs::path& cli, const SeedRun& first) {
  const fs::path kept = first.root.string() + ".first";
  fs::remove_all(kept);
  fs::rename(first.root, kept);
  std::string cmd = "\"" + cli.string() + "\" pipeline --profile fast --seed " + std::to_string(first.seed) + " --out \"" +
                    first.root.string() + "\" --threads 1 > \"" + first.root.string() + ".rerun.log\" 2>&1";
  const int rc = std::system(cmd.c_str());
  std::size_t files = 0, differ = 0;
  std::string example;
  if (rc == 0) {
    const auto a = tree(kept);
    const auto b = tree(first.root);
    files = a.size();
    for (const auto& [name, bytes] : a) {
      auto it = b.find(name);
      if (it == b.end() || it->second != bytes) {
        ++differ;
        if (example.empty()) example = name;
      }
    }
    for (const auto& [name, bytes] : b) differ += a.contains(name) ? 0 : 1;
  } else {
    // keep the original run in place for any later reuse
    fs::remove_all(first.root);
    fs::rename(kept, first.root);
  }
  fs::remove_all(kept);
  report(12, "determinism", rc == 0 && differ == 0 && files > 0,
         fmt("cli rerun exit %d, %zu files compared, %zu differ%s%s", rc, files, differ, example.empty() ? "" : ", e.g. ",
             example.c_str()));
}

// --------------------------------------------------------- informational

void supporting_measurements(const SeedRun& run) {
  const PipelineLayout at{run.root};
  {
    std::ifstream csv(at.removal() / "removal_loss.csv");
    std::string line;
    std::getline(csv, line);
    std::vector<double> loss;
    while (std::getline(csv, line)) loss.push_back(std::stod(line.substr(line.find(',') + 1)));
    if (loss.size() >= 200) {
      double head = 0, tail = 0;
      for (int i = 0; i < 100; ++i) {
        head += loss[static_cast<std::size_t>(i)];
        tail += loss[loss.size() - 100 + static_cast<std::size_t>(i)];
      }
      info(fmt("removal loss: last-100 mean / first-100 mean = %.3f (want < 0.5)", tail / head));
    }
  }
  const auto removal_report = read_json(at.eval_removal() / "removal_report.json");
  info(fmt("removal outside-region MAE %.4f (want < 0.05)", jnum(removal_report["outside_region_mae"]["mean"])));
  const auto ins_report = read_json(at.eval_insertion() / "with_bootstrap_report.json");
  info(fmt("insertion in-mask MAE vs pasted %.4f (want < 0.05)", jnum(ins_report["in_mask_mae"]["mean"])));
  const auto summary = read_json(at.root / "summary.json");
  info("bootstrap filter counts " + summary["bootstrap"].dump());

  const NoiseSchedule sched = make_schedule(1000);
  const RunConfig cfg = fast_config(run.seed, run.root);
  Denoiser<float> removal = load_denoiser(latest_checkpoint(at.removal(), "removal"));
  Denoiser<float> insertion = load_denoiser(latest_checkpoint(at.finetune(), "insertion_finetune"));
  const PairSet held = load_pairs(DatasetManifest::load(at.pairs()), Split::heldout);
  const std::size_t n = std::min<std::size_t>(16, held.size());
  const int steps = cfg.sampler_steps();

  double empty_psnr = 0, move_psnr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const MaskBuffer none(held.masks[i].height(), held.masks[i].width());
    empty_psnr += psnr(remove(removal, held.factual[i], none, sched, eval_seed(1, i), steps).quantized(), held.factual[i]);
    const MoveResult mv = intra_image_move(removal, insertion, held.factual[i], held.masks[i], 0, 0, sched, eval_seed(2, i), steps);
    move_psnr += psnr(mv.output.quantized(), held.factual[i]);
  }
  info(fmt("empty-mask removal reconstructs the factual at %.2f dB (want >= 25) over %zu images", empty_psnr / n, n));
  info(fmt("move by (0,0) returns the input at %.2f dB (want >= 20) over %zu images", move_psnr / n, n));

  // Effect synthesis: sampled change outside the mask after pretraining
  // relative to the same quantity for the step-0 model.
  const TripletSet trip = load_triplets(DatasetManifest::load(at.triplets()));
  Denoiser<float> step0 = fresh_insertion_model(cfg.model_config());
  Denoiser<float> pre = load_denoiser(latest_checkpoint(at.pretrain(), "insertion_pretrain"));
  auto outside_change = [&](Denoiser<float>& m) {
    double total = 0;
    const std::size_t k = std::min<std::size_t>(16, trip.size());
    for (std::size_t i = 0; i < k; ++i) {
      const ImageBuffer out = insert(m, trip.pasted_b[i], trip.mask_b[i], sched, eval_seed(4, i), steps).quantized();
      total += masked_mae(out, trip.pasted_b[i], trip.mask_b[i].inverted()).value_or(0);
    }
    return total / static_cast<double>(k);
  };
  const double before = outside_change(step0);
  const double after = outside_change(pre);
  info(fmt("pretrained insertion changes outside the mask by %.4f vs %.4f at step 0 (ratio %.2f, want >= 5)", after, before,
           after / before));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfedit acceptance run"};
  std::string work = "acceptance_work";
  std::string cli;
  int n_seeds = 3;
  bool reuse = false;
  bool quick_only = false;
  app.add_option("--work", work, "scratch directory for the runs");
  app.add_option("--cli", cli, "cfedit binary used for the determinism rerun")->required();
  app.add_option("--seeds", n_seeds, "pipeline seeds")->check(CLI::Range(1, 10));
  app.add_flag("--reuse", reuse, "reuse finished pipeline runs found under --work");
  app.add_flag("--no-training", quick_only, "only the criteria that need no training");
  std::string report_path;
  app.add_option("--report", report_path, "also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  if (!report_path.empty()) {
    report_file.open(report_path, std::ios::trunc);
    if (!report_file) {
      std::fprintf(stderr, "cannot write %s\n", report_path.c_str());
      return 2;
    }
  }
  tune_allocator();

  try {
    const fs::path root = fs::absolute(work);
    fs::create_directories(root);
    gradient_oracle();
    schedule_invariants();
    forward_statistics();
    renderer_consistency();
    area_table();
    zero_init_invariance();
    if (!quick_only) {
      overfit(root);
      std::vector<SeedRun> runs;
      for (int s = 0; s < n_seeds; ++s) runs.push_back(pipeline_run(root, static_cast<std::uint64_t>(s), reuse));
      bootstrap_identity(runs);
      removal_vs_baseline(runs);
      bootstrap_ablation(runs);
      size_ablation(root, runs, reuse);
      supporting_measurements(runs.front());
      determinism(cli, runs.front());
    }
  } catch (const std::exception& e) {
    emit(std::string("ERROR acceptance harness: ") + e.what());
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int passed = 0;
  emit("");
  for (const auto& v : verdicts) {
    emit(std::string(v.pass ? "PASS" : "FAIL") + " [" + std::to_string(v.id) + "] " + v.name);
    passed += v.pass ? 1 : 0;
  }
  emit(std::to_string(passed) + "/" + std::to_string(verdicts.size()) + " criteria pass");
  return 0;
}

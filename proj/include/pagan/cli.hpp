#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pagan/beamform.hpp"
#include "pagan/config.hpp"
#include "pagan/dataset.hpp"
#include "pagan/gan.hpp"
#include "pagan/metrics.hpp"
#include "pagan/parf.hpp"
#include "pagan/pgm.hpp"
#include "pagan/simulate.hpp"
#include "pagan/threading.hpp"

namespace pagan {

namespace fs = std::filesystem;

namespace cli_detail {

inline void write_config_copy(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream os(dir / "config.txt");
  if (!os) throw IoError("cannot write " + (dir / "config.txt").string());
  os << cfg.to_text();
}

inline std::string spot_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spot_%03d", i);
  return buf;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct LoadedStack {
  FrameStack stack;
  KeyValueMap meta;
  std::string name;
};

inline std::vector<LoadedStack> load_sim_dir(const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError("input directory does not exist: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".parf") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<LoadedStack> out;
  for (const auto& f : files) {
    LoadedStack ls;
    ls.stack = read_parf(f);
    ls.name = f.stem().string();
    fs::path meta = f;
    meta.replace_extension(".meta");
    if (fs::exists(meta)) {
      ls.meta = read_keyvalues(meta);
      if (ls.meta.count("lateral_m") && ls.meta.count("axial_m"))
        ls.stack.source_truth =
            SourceTruth{std::stod(ls.meta.at("lateral_m")), std::stod(ls.meta.at("axial_m"))};
    }
    out.push_back(std::move(ls));
  }
  return out;
}

inline SourceSpec source_from_config(const RunConfig& cfg, double lateral_m, double axial_m) {
  SourceSpec s;
  s.lateral_m = lateral_m;
  s.axial_m = axial_m;
  s.pulse_width_s = cfg.get_double("simulate.pulse_width_s");
  s.spot_sigma_m = cfg.get_double("simulate.spot_sigma_m");
  s.amplitude = cfg.get_double("simulate.amplitude");
  return s;
}

// Target frame for one stack per the configured target kind.
inline MatF make_target_frame(const RunConfig& cfg, const FrameStack& stack,
                              const RfFrame& reference) {
  const TargetKind kind = target_kind_from_string(cfg.get("dataset.target"));
  if (kind == TargetKind::reference) return reference.samples;
  if (!stack.source_truth)
    throw ConfigError("segmented/exact targets need simulator ground truth (missing .meta)");
  const auto& g = stack.geometry();
  const SourceSpec spec =
      source_from_config(cfg, stack.source_truth->lateral_m, stack.source_truth->axial_m);
  if (kind == TargetKind::segmented) {
    const int margin = cfg.get_int("dataset.mask_margin_samples");
    const auto mask = ground_truth_mask(g, spec, margin);
    return apply_background_median(reference, mask).samples;
  }
  // exact reconstruction: DAS of the reference, Gaussian-masked at its peak
  const DasImage das = das_reconstruct(reference);
  PointTarget peak = locate_peak(das);
  peak.sigma_m = cfg.get_double("simulate.spot_sigma_m");
  return mat_cast<float>(exact_target(das, peak).pixels);
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// simulate: one PARF file + sidecar per acquisition spot, plus a manifest.

inline int cmd_simulate(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  cli_detail::write_config_copy(cfg, out_dir);

  const AcquisitionGeometry g = cfg.geometry();
  const int spots = cfg.get_int("simulate.spots");
  if (spots < 0) throw ConfigError("simulate.spots must be >= 0");
  const auto depths = cfg.get_list("simulate.depths_m");
  const double span = cfg.get_double("simulate.lateral_span_frac");
  const double aperture_m = (g.n_elements - 1) * static_cast<double>(g.element_pitch_m);
  const uint64_t seed = cfg.get_u64("run.seed");

  KeyValueMap manifest;
  manifest["count"] = std::to_string(spots);
  for (int i = 0; i < spots; ++i) {
    Rng rng = make_rng(seed, 0x10c + static_cast<uint64_t>(i));
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    const double lateral = unit(rng) * span * aperture_m;
    const double axial = depths[static_cast<size_t>(i) % depths.size()];
    const SourceSpec spec = cli_detail::source_from_config(cfg, lateral, axial);
    const NoiseSpec noise = cfg.noise(mix_seed(seed, 1000 + static_cast<uint64_t>(i)));

    const FrameStack stack = synthesize_stack(g, spec, noise);
    const std::string name = cli_detail::spot_name(i);
    write_parf(out_dir / (name + ".parf"), stack);

    KeyValueMap meta;
    meta["lateral_m"] = cli_detail::fmt(lateral);
    meta["axial_m"] = cli_detail::fmt(axial);
    meta["seed"] = std::to_string(noise.seed);
    meta["white_noise_std"] = cli_detail::fmt(noise.white_noise_std);
    meta["channel_offset_std"] = cli_detail::fmt(noise.channel_offset_std);
    meta["spike_rate"] = cli_detail::fmt(noise.spike_rate);
    meta["pulse_width_s"] = cli_detail::fmt(spec.pulse_width_s);
    meta["spot_sigma_m"] = cli_detail::fmt(spec.spot_sigma_m);
    meta["amplitude"] = cli_detail::fmt(spec.amplitude);
    write_keyvalues(out_dir / (name + ".meta"), meta);

    manifest[name + ".file"] = name + ".parf";
    manifest[name + ".lateral_m"] = cli_detail::fmt(lateral);
    manifest[name + ".axial_m"] = cli_detail::fmt(axial);
    manifest[name + ".seed"] = std::to_string(noise.seed);
  }
  write_keyvalues(out_dir / "manifest.txt", manifest);
  std::cout << "simulated " << spots << " spot(s) into " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-dataset: PARF stacks -> per-split patch datasets.

inline int cmd_build_dataset(const RunConfig& cfg, const fs::path& in_dir,
                             const fs::path& out_dir) {
  cfg.validate();
  auto loaded = cli_detail::load_sim_dir(in_dir);
  if (loaded.empty()) throw IoError("no .parf inputs in " + in_dir.string());

  // The acquisition-duplicate accident is modeled as exact-hash dedup.
  loaded = dedup_by_hash(std::move(loaded), [](const cli_detail::LoadedStack& s) {
    return stack_hash(s.stack);
  });

  const uint64_t seed = cfg.get_u64("run.seed");
  const std::array<double, 3> ratios = {cfg.get_double("dataset.train_ratio"),
                                        cfg.get_double("dataset.val_ratio"),
                                        cfg.get_double("dataset.test_ratio")};
  auto splits = split_acquisitions(loaded, ratios, seed);

  fs::create_directories(out_dir);
  cli_detail::write_config_copy(cfg, out_dir);
  const int median_window = cfg.get_int("dataset.median_window");

  int stack_id = 0;
  for (int sp = 0; sp < 3; ++sp) {
    if (splits[sp].empty()) continue;
    std::vector<StackForPatches> prepared;
    for (auto& ls : splits[sp]) {
      const RfFrame reference = build_reference(ls.stack, median_window);
      StackForPatches entry;
      entry.target = cli_detail::make_target_frame(cfg, ls.stack, reference);
      entry.stack = std::move(ls.stack);
      entry.stack_id = stack_id++;
      prepared.push_back(std::move(entry));
    }
    auto [samples, manifest] = build_patch_dataset(prepared, cfg.patch_config());
    manifest.split = static_cast<SplitKind>(sp);
    const fs::path dir = out_dir / to_string(manifest.split);
    write_patch_dataset(dir, samples, manifest);

    std::string breakdown;
    int64_t total = 0;
    for (const auto& [k, c] : manifest.per_frames_averaged) {
      if (!breakdown.empty()) breakdown += " + ";
      breakdown += std::to_string(c.frame_samples);
      total += c.frame_samples;
    }
    std::cout << to_string(manifest.split) << ": " << breakdown << " = " << total
              << " frame samples, " << manifest.patch_count << " patches\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train: patch dataset -> checkpoints + history + sample strips.

inline int cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir) {
  cfg.validate();
  fs::path data_dir = dataset_dir;
  if (!fs::exists(data_dir / "manifest") && fs::exists(data_dir / "train" / "manifest"))
    data_dir = data_dir / "train";
  auto [samples, manifest] = read_patch_dataset(data_dir);
  if (samples.empty()) throw IoError("dataset is empty: " + data_dir.string());

  TrainConfig tc = cfg.train_config();
  if (tc.target_kind != manifest.target_kind)
    throw ConfigError(std::string("dataset target kind (") + to_string(manifest.target_kind) +
                      ") does not match dataset.target (" + to_string(tc.target_kind) + ")");
  fs::create_directories(out_dir);
  cli_detail::write_config_copy(cfg, out_dir);
  if (tc.checkpoint_interval > 0) tc.checkpoint_dir = out_dir / "checkpoints";

  TrainedPair result = train(samples, tc);

  nn::save_checkpoint(out_dir / "generator.pamg", result.generator);
  nn::save_checkpoint(out_dir / "discriminator.pamg", result.discriminator);
  write_history_csv(out_dir / "history.csv", result.history);

  // Sample strips: input | prediction | target for the first few patches.
  result.generator.set_training(false);
  const int side = manifest.patch_side;
  for (int i = 0; i < std::min<int>(3, static_cast<int>(samples.size())); ++i) {
    auto pred = result.generator.forward(
        nn::Tensor<float>::from_data({1, 1, side, side}, samples[i].input.v));
    MatF pred_mat(side, side);
    std::copy(pred.values().begin(), pred.values().end(), pred_mat.v.begin());
    const MatF strip = hstack_panels({samples[i].input, pred_mat, samples[i].target});
    write_pgm(out_dir / ("sample_" + std::to_string(i) + ".pgm"), strip);
  }

  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::cout << "trained " << result.history.size() << " epochs; final loss_d=" << last.loss_d
              << " loss_g=" << last.loss_g_adv << " loss_l1=" << last.loss_l1 << "\n";
  } else {
    std::cout << "epochs = 0; wrote untrained pair\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate: metric table for a denoiser, or the 7-column Dual-GAN strips.

inline int cmd_evaluate(const RunConfig& cfg, const fs::path& model_path,
                        const std::optional<fs::path>& denoiser_path, const fs::path& data_dir,
                        const fs::path& out_dir, bool dual, bool with_latency = false) {
  cfg.validate();
  if (!fs::exists(model_path)) throw IoError("model file not found: " + model_path.string());
  auto model = nn::load_checkpoint<float>(model_path);

  auto loaded = cli_detail::load_sim_dir(data_dir);
  if (loaded.empty()) throw IoError("no .parf inputs in " + data_dir.string());
  fs::create_directories(out_dir);
  cli_detail::write_config_copy(cfg, out_dir);
  const int median_window = cfg.get_int("dataset.median_window");

  if (!dual) {
    std::vector<FrameStack> stacks;
    for (auto& ls : loaded) stacks.push_back(std::move(ls.stack));
    DenoiserEvalOptions opt;
    opt.median_window = median_window;
    opt.with_latency = with_latency;
    opt.bench_warmup = cfg.get_int("evaluation.bench_warmup");
    opt.bench_iters = std::max(2, cfg.get_int("evaluation.bench_iters"));
    auto result = evaluate_denoiser(model, stacks, opt);
    write_eval_csv(out_dir / "eval.csv", result.rows);
    const std::string table = format_eval_table(result.rows);
    std::ofstream(out_dir / "eval.txt") << table;
    std::cout << table;

    for (size_t i = 0; i < stacks.size(); ++i) {
      const RfFrame reference = build_reference(stacks[i], median_window);
      auto [noisy, s1] = normalize(stacks[i].frames.front());
      RfFrame pred = predict_frame(model, noisy);
      const MatF strip = hstack_panels({noisy.samples, pred.samples, reference.samples});
      write_pgm(out_dir / ("denoise_" + std::to_string(i) + ".pgm"), strip);
    }
    return 0;
  }

  if (!denoiser_path) throw ConfigError("--dual requires --denoiser MODEL");
  if (!fs::exists(*denoiser_path))
    throw IoError("model file not found: " + denoiser_path->string());
  auto denoiser = nn::load_checkpoint<float>(*denoiser_path);
  auto& reconstructor = model;

  // Calibration: median DAS peak over the provided stacks' references.
  std::vector<DasImage> reference_das;
  std::vector<RfFrame> references;
  for (const auto& ls : loaded) {
    references.push_back(build_reference(ls.stack, median_window));
    reference_das.push_back(das_reconstruct(references.back()));
  }
  const double calibration = calibrate_detection(reference_das);
  const double threshold = cfg.get_double("evaluation.detect_threshold");

  std::ofstream csv(out_dir / "dual.csv");
  csv << "stack,direct_detected,direct_err_px,dual_detected,dual_err_px\n";
  for (size_t i = 0; i < loaded.size(); ++i) {
    const auto& ls = loaded[i];
    auto [noisy, s1] = normalize(ls.stack.frames.front());

    RfFrame denoised = predict_frame(denoiser, noisy);
    RfFrame direct_rf = predict_frame(reconstructor, noisy);
    DasImage direct{mat_cast<double>(direct_rf.samples), ls.stack.geometry()};
    DasImage dual_img = dual_gan(denoiser, reconstructor, noisy);

    const DasImage das_single = das_reconstruct(ls.stack.frames.front());
    auto [den_norm, s2] = normalize(denoised);
    const DasImage das_denoised = das_reconstruct(den_norm);

    const MatF strip = hstack_panels(
        {noisy.samples, denoised.samples, mat_cast<float>(das_single.pixels),
         mat_cast<float>(reference_das[i].pixels), mat_cast<float>(das_denoised.pixels),
         mat_cast<float>(direct.pixels), mat_cast<float>(dual_img.pixels)});
    write_pgm(out_dir / ("dual_" + std::to_string(i) + ".pgm"), strip);

    auto direct_hit = detect_source(direct, threshold, calibration);
    auto dual_hit = detect_source(dual_img, threshold, calibration);
    std::string direct_err = "", dual_err = "";
    if (ls.stack.source_truth) {
      const auto& t = *ls.stack.source_truth;
      if (direct_hit)
        direct_err = cli_detail::fmt(
            localization_error(*direct_hit, t.axial_m, t.lateral_m, ls.stack.geometry()));
      if (dual_hit)
        dual_err = cli_detail::fmt(
            localization_error(*dual_hit, t.axial_m, t.lateral_m, ls.stack.geometry()));
    }
    csv << ls.name << "," << (direct_hit ? 1 : 0) << "," << direct_err << ","
        << (dual_hit ? 1 : 0) << "," << dual_err << "\n";
  }
  std::cout << "wrote dual-GAN strips and dual.csv for " << loaded.size() << " stack(s)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench: per-frame inference latency, single- and multi-threaded.

inline int cmd_bench(const RunConfig& cfg, const fs::path& model_path, const fs::path& out_dir) {
  cfg.validate();
  if (!fs::exists(model_path)) throw IoError("model file not found: " + model_path.string());
  auto model = nn::load_checkpoint<float>(model_path);

  const AcquisitionGeometry g = cfg.geometry();
  SourceSpec spec = cli_detail::source_from_config(cfg, 0.0, cfg.get_list("simulate.depths_m")[0]);
  const NoiseSpec noise = cfg.noise(cfg.get_u64("run.seed"));
  FrameStack stack = synthesize_stack(g, spec, noise);
  auto [frame, scale] = normalize(stack.frames.front());

  const int warmup = cfg.get_int("evaluation.bench_warmup");
  const int iters = std::max(2, cfg.get_int("evaluation.bench_iters"));
  const int threads = cfg.get_int("run.threads");

  fs::create_directories(out_dir);
  cli_detail::write_config_copy(cfg, out_dir);
  std::ofstream csv(out_dir / "bench.csv");
  csv << "threads,mean_ms,std_ms,min_ms,iters\n";

  std::vector<int> modes = {1};
  if (threads > 1) modes.push_back(threads);
  for (int t : modes) {
    set_thread_count(t);
    const LatencySummary s = benchmark_inference(model, frame, warmup, iters);
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%d\n", t, s.mean_ms, s.std_ms, s.min_ms,
                  s.iters);
    csv << line;
    std::printf("threads=%d  %s ms (min %.1f, n=%d)\n", t,
                format_pm(s.mean_ms, s.std_ms, 1).c_str(), s.min_ms, s.iters);
  }
  set_thread_count(1);
  return 0;
}

}  // namespace pagan

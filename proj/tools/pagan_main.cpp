// pagan: single-frame photoacoustic denoising and reconstruction toolkit.
//
// Subcommands: simulate, build-dataset, train, evaluate, bench.
// Every run is reproducible from (config, seed); the effective config is
// copied into each output directory.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "pagan/cli.hpp"

namespace {

pagan::RunConfig load_config(const std::string& config_path, uint64_t seed_override,
                             bool seed_set, int threads_override, bool threads_set) {
  pagan::RunConfig cfg;
  if (!config_path.empty()) cfg = pagan::RunConfig::from_file(config_path);
  if (seed_set) cfg.set("run.seed", std::to_string(seed_override));
  if (threads_set) cfg.set("run.threads", std::to_string(threads_override));
  pagan::set_thread_count(cfg.get_int("run.threads"));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-frame photoacoustic denoising and reconstruction toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "configuration file (section.key = value lines)");
  auto* seed_opt = app.add_option("--seed", seed, "override run.seed");
  auto* threads_opt = app.add_option("--threads", threads, "override run.threads");
  app.add_option("--out", out_dir, "output directory");

  auto* sim = app.add_subcommand("simulate", "synthesize acquisition spots as PARF files");
  int spots = -1;
  std::string depths;
  sim->add_option("--spots", spots, "override simulate.spots");
  sim->add_option("--depths", depths, "override simulate.depths_m (comma separated)");

  auto* build = app.add_subcommand("build-dataset", "assemble patch datasets from PARF stacks");
  std::string in_dir;
  std::string target;
  build->add_option("--in", in_dir, "directory of .parf/.meta inputs")->required();
  build->add_option("--target", target, "override dataset.target (reference|segmented|exact)");

  auto* tr = app.add_subcommand("train", "train a denoising or reconstruction GAN");
  std::string dataset_dir, model_name, train_target;
  int epochs = -1;
  tr->add_option("--dataset", dataset_dir, "patch dataset directory")->required();
  tr->add_option("--model", model_name, "override training.model");
  tr->add_option("--target", train_target, "override dataset.target");
  tr->add_option("--epochs", epochs, "override training.epochs");

  auto* ev = app.add_subcommand("evaluate", "metric table / Dual-GAN strips on test stacks");
  std::string model_path, denoiser_path, data_dir;
  bool dual = false, with_latency = false;
  ev->add_option("--model", model_path, "generator checkpoint (.pamg)")->required();
  ev->add_option("--denoiser", denoiser_path, "denoiser checkpoint for --dual");
  ev->add_option("--data", data_dir, "directory of test .parf stacks")->required();
  ev->add_flag("--dual", dual, "sequential denoise + reconstruct evaluation");
  ev->add_flag("--with-latency", with_latency, "include wall-clock latency in the table");

  auto* bench = app.add_subcommand("bench", "per-frame inference latency");
  std::string bench_model;
  bench->add_option("--model", bench_model, "generator checkpoint (.pamg)")->required();

  try {
    app.parse(argc, argv);
    pagan::RunConfig cfg = load_config(config_path, seed, !seed_opt->empty(), threads,
                                       !threads_opt->empty());
    if (sim->parsed()) {
      if (spots >= 0) cfg.set("simulate.spots", std::to_string(spots));
      if (!depths.empty()) cfg.set("simulate.depths_m", depths);
      return pagan::cmd_simulate(cfg, out_dir);
    }
    if (build->parsed()) {
      if (!target.empty()) cfg.set("dataset.target", target);
      return pagan::cmd_build_dataset(cfg, in_dir, out_dir);
    }
    if (tr->parsed()) {
      if (!model_name.empty()) cfg.set("training.model", model_name);
      if (!train_target.empty()) cfg.set("dataset.target", train_target);
      if (epochs >= 0) cfg.set("training.epochs", std::to_string(epochs));
      return pagan::cmd_train(cfg, dataset_dir, out_dir);
    }
    if (ev->parsed()) {
      std::optional<std::filesystem::path> den;
      if (!denoiser_path.empty()) den = denoiser_path;
      return pagan::cmd_evaluate(cfg, model_path, den, data_dir, out_dir, dual, with_latency);
    }
    if (bench->parsed()) return pagan::cmd_bench(cfg, bench_model, out_dir);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const pagan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const pagan::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

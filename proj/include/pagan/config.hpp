#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pagan/dataset.hpp"
#include "pagan/errors.hpp"
#include "pagan/gan.hpp"
#include "pagan/geometry.hpp"
#include "pagan/simulate.hpp"

namespace pagan {

struct ConfigEntry {
  const char* key;
  const char* def;
  const char* doc;
};

// Flat "section.key = value" run configuration. Unknown keys are rejected;
// every key has a documented default (see docs/config.md).
class RunConfig {
 public:
  static const std::vector<ConfigEntry>& schema() {
    static const std::vector<ConfigEntry> entries = {
        {"run.seed", "1", "master seed; every derived stream is a pure function of it"},
        {"run.threads", "1", "worker threads for parallelizable kernels"},
        {"geometry.n_elements", "128", "transducer elements n_e (also the patch side)"},
        {"geometry.n_samples", "2000", "time samples per frame n_t"},
        {"geometry.n_frames", "260", "frames recorded per acquisition spot n_f"},
        {"geometry.sample_rate_hz", "40000000", "DAQ sampling rate"},
        {"geometry.speed_of_sound_mps", "1480", "water-immersion sound speed"},
        {"geometry.element_pitch_m", "0.0003", "element pitch"},
        {"geometry.axial_offset_m", "0", "depth of the first recorded sample"},
        {"noise.white_noise_std", "0.5", "white noise std relative to clean peak"},
        {"noise.channel_offset_std", "0.1", "per-element DC band std relative to clean peak"},
        {"noise.spike_rate", "0.002", "isolated temporal spike probability per column"},
        {"simulate.spots", "20", "acquisition spots to synthesize"},
        {"simulate.depths_m", "0.03,0.04,0.06,0.07", "cycled axial source depths"},
        {"simulate.lateral_span_frac", "0.6",
         "random lateral positions span this fraction of the aperture"},
        {"simulate.pulse_width_s", "1e-7", "Gaussian sigma of the emitted pulse"},
        {"simulate.spot_sigma_m", "0.0003", "physical source extent"},
        {"simulate.amplitude", "1", "source amplitude"},
        {"dataset.fraction", "0.05", "fraction of each frame pool to sample"},
        {"dataset.steps", "10", "moving-window steps each way (21 patches)"},
        {"dataset.step_size", "8", "moving-window step in samples"},
        {"dataset.median_window", "5", "temporal median filter size for the reference"},
        {"dataset.mask_margin_samples", "70",
         "half-width of the ground-truth signal band in samples"},
        {"dataset.target", "reference", "target kind: reference | segmented | exact"},
        {"dataset.train_ratio", "0.8", "acquisition-level split ratio"},
        {"dataset.val_ratio", "0.2", "acquisition-level split ratio"},
        {"dataset.test_ratio", "0", "acquisition-level split ratio"},
        {"training.model", "pix2pix", "generator: pix2pix | pix2pix-residual"},
        {"training.lr", "0.0002", "Adam learning rate"},
        {"training.beta1", "0.5", "Adam beta1"},
        {"training.lambda_l1", "1000", "L1 regularization weight"},
        {"training.batch_size", "32", "samples per batch"},
        {"training.images_per_epoch", "1024", "samples drawn per epoch"},
        {"training.epochs", "200", "training epochs (paper-scale profile: 5000)"},
        {"training.base_filters", "16", "generator base width (residual default: 8)"},
        {"training.depth", "4", "U-Net depth (input side must divide 2^depth)"},
        {"training.disc_filters", "16", "discriminator base width"},
        {"training.checkpoint_interval", "0", "epochs between checkpoints; 0 = final only"},
        {"evaluation.detect_threshold", "0.25",
         "detection threshold as a fraction of the calibration peak"},
        {"evaluation.bench_warmup", "3", "benchmark warmup iterations"},
        {"evaluation.bench_iters", "20", "benchmark timed iterations"},
        {"evaluation.ssim_window", "0", "0 = global SSIM; >0 = sliding-window size"},
    };
    return entries;
  }

  RunConfig() {
    for (const auto& e : schema()) values_[e.key] = e.def;
  }

  static RunConfig from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
  }

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    try {
      size_t pos = 0;
      const double v = std::stod(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not a number: " + get(key));
    }
  }

  int get_int(const std::string& key) const {
    const double v = get_double(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("config: key '" + key + "' is not an integer: " + get(key));
    return i;
  }

  uint64_t get_u64(const std::string& key) const {
    try {
      return std::stoull(get(key));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not an unsigned integer: " + get(key));
    }
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream is(get(key));
    std::string item;
    while (std::getline(is, item, ',')) {
      const std::string t = trim(item);
      if (t.empty()) continue;
      try {
        out.push_back(std::stod(t));
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has a non-numeric element: " + t);
      }
    }
    return out;
  }

  // Deterministic dump of the effective configuration.
  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  AcquisitionGeometry geometry() const {
    AcquisitionGeometry g;
    g.n_elements = get_int("geometry.n_elements");
    g.n_samples = get_int("geometry.n_samples");
    g.n_frames = get_int("geometry.n_frames");
    g.sample_rate_hz = static_cast<float>(get_double("geometry.sample_rate_hz"));
    g.speed_of_sound_mps = static_cast<float>(get_double("geometry.speed_of_sound_mps"));
    g.element_pitch_m = static_cast<float>(get_double("geometry.element_pitch_m"));
    g.axial_offset_m = static_cast<float>(get_double("geometry.axial_offset_m"));
    return g;
  }

  NoiseSpec noise(uint64_t seed) const {
    NoiseSpec n;
    n.white_noise_std = get_double("noise.white_noise_std");
    n.channel_offset_std = get_double("noise.channel_offset_std");
    n.spike_rate = get_double("noise.spike_rate");
    n.seed = seed;
    return n;
  }

  PatchConfig patch_config() const {
    PatchConfig p;
    p.fraction = get_double("dataset.fraction");
    p.steps = get_int("dataset.steps");
    p.step_size = get_int("dataset.step_size");
    p.seed = get_u64("run.seed");
    p.target_kind = target_kind_from_string(get("dataset.target"));
    return p;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.lr = static_cast<float>(get_double("training.lr"));
    t.beta1 = static_cast<float>(get_double("training.beta1"));
    t.lambda_l1 = static_cast<float>(get_double("training.lambda_l1"));
    t.batch_size = get_int("training.batch_size");
    t.images_per_epoch = get_int("training.images_per_epoch");
    t.epochs = get_int("training.epochs");
    t.seed = get_u64("run.seed");
    t.target_kind = target_kind_from_string(get("dataset.target"));
    t.model = model_kind_from_string(get("training.model"));
    t.base_filters = get_int("training.base_filters");
    t.depth = get_int("training.depth");
    t.disc_filters = get_int("training.disc_filters");
    t.checkpoint_interval = get_int("training.checkpoint_interval");
    return t;
  }

  // Cross-field checks that must hold before any work starts.
  void validate() const {
    geometry().validate();
    const int n_elements = get_int("geometry.n_elements");
    const int depth = get_int("training.depth");
    if (n_elements % (1 << depth) != 0)
      throw ConfigError("config: patch side geometry.n_elements (" +
                        std::to_string(n_elements) + ") must be divisible by 2^training.depth");
    const double ratios =
        get_double("dataset.train_ratio") + get_double("dataset.val_ratio") +
        get_double("dataset.test_ratio");
    if (std::abs(ratios - 1.0) > 1e-9)
      throw ConfigError("config: dataset split ratios must sum to 1");
    if (get_int("training.images_per_epoch") % get_int("training.batch_size") != 0)
      throw ConfigError("config: training.images_per_epoch must be a multiple of batch_size");
    const double fr = get_double("dataset.fraction");
    if (!(fr > 0.0) || fr > 1.0) throw ConfigError("config: dataset.fraction must be in (0, 1]");
    const double th = get_double("evaluation.detect_threshold");
    if (!(th > 0.0) || !(th < 1.0))
      throw ConfigError("config: evaluation.detect_threshold must be in (0, 1)");
    if (get_list("simulate.depths_m").empty())
      throw ConfigError("config: simulate.depths_m must list at least one depth");
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pagan

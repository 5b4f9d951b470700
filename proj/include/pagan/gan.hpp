#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pagan/adam.hpp"
#include "pagan/beamform.hpp"
#include "pagan/dataset.hpp"
#include "pagan/model.hpp"
#include "pagan/rf.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

enum class ModelKind { pix2pix, pix2pix_residual };

inline const char* to_string(ModelKind m) {
  return m == ModelKind::pix2pix ? "pix2pix" : "pix2pix-residual";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "pix2pix") return ModelKind::pix2pix;
  if (s == "pix2pix-residual" || s == "pix2pix_residual") return ModelKind::pix2pix_residual;
  throw InvalidArgument("unknown model kind: " + s);
}

struct TrainConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;  // Pix2Pix-standard momentum for GAN stability
  float beta2 = 0.999f;
  float lambda_l1 = 1000.0f;
  int batch_size = 32;
  int images_per_epoch = 1024;
  int epochs = 200;
  uint64_t seed = 0;
  TargetKind target_kind = TargetKind::reference;
  ModelKind model = ModelKind::pix2pix;
  int base_filters = 16;
  int depth = 4;
  int disc_filters = 16;
  int checkpoint_interval = 0;               // 0 = no checkpoints
  std::filesystem::path checkpoint_dir;

  void validate() const {
    if (!(lr > 0)) throw InvalidArgument("train: lr must be > 0");
    if (lambda_l1 < 0) throw InvalidArgument("train: lambda_l1 must be >= 0");
    if (batch_size < 1 || images_per_epoch < 1 || epochs < 0)
      throw InvalidArgument("train: counts must be positive");
    if (images_per_epoch % batch_size != 0)
      throw InvalidArgument("train: images_per_epoch must be a multiple of batch_size");
  }
};

struct EpochRecord {
  double loss_d = 0.0;
  double loss_g_adv = 0.0;
  double loss_l1 = 0.0;
};

struct TrainedPair {
  nn::ModelGraph<float> generator;
  nn::ModelGraph<float> discriminator;
  std::vector<EpochRecord> history;
  TrainConfig config;
};

// ---------------------------------------------------------------------------
// Losses

// Discriminator: BCE pushing real logits to 1 and fake logits to 0, averaged
// over the PatchGAN grid and over the two terms (so an uninformative
// all-zero-logit discriminator scores exactly ln 2).
template <typename T>
nn::Tensor<T> discriminator_loss(const nn::Tensor<T>& d_real_logits,
                                 const nn::Tensor<T>& d_fake_logits) {
  auto real_term = nn::bce_with_logits_mean(d_real_logits, T(1));
  auto fake_term = nn::bce_with_logits_mean(d_fake_logits, T(0));
  return nn::mul_scalar(nn::add(real_term, fake_term), T(0.5));
}

// Generator: BCE pushing fake logits to 1, plus lambda_l1 * mean|target-fake|.
template <typename T>
nn::Tensor<T> generator_loss(const nn::Tensor<T>& d_fake_logits, const nn::Tensor<T>& fake,
                             const nn::Tensor<T>& target, T lambda_l1) {
  auto adv = nn::bce_with_logits_mean(d_fake_logits, T(1));
  if (lambda_l1 == T(0)) return adv;
  return nn::add(adv, nn::mul_scalar(nn::l1_mean(fake, target), lambda_l1));
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> gan_losses(const nn::Tensor<T>& d_real_logits,
                                                   const nn::Tensor<T>& d_fake_logits,
                                                   const nn::Tensor<T>& fake,
                                                   const nn::Tensor<T>& target, T lambda_l1) {
  if (d_real_logits.shape() != d_fake_logits.shape())
    throw ShapeError("gan_losses: logit grids must be co-shaped");
  if (fake.shape() != target.shape())
    throw ShapeError("gan_losses: fake/target must be co-shaped");
  auto finite = [](const std::vector<T>& v) {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  };
  if (!finite(d_real_logits.values()) || !finite(d_fake_logits.values()) ||
      !finite(fake.values()) || !finite(target.values()))
    throw DivergenceError("gan_losses: non-finite inputs");
  auto loss_d = discriminator_loss(d_real_logits, d_fake_logits);
  auto loss_g = generator_loss(d_fake_logits, fake, target, lambda_l1);
  return {loss_d, loss_g};
}

// ---------------------------------------------------------------------------
// Training loop

namespace detail {

inline nn::Tensor<float> batch_tensor(const std::vector<PatchSample>& data,
                                      const std::vector<int>& idx, size_t first, int count,
                                      bool target) {
  const int side = data[idx[first]].input.rows;
  std::vector<float> buf(static_cast<size_t>(count) * side * side);
  for (int b = 0; b < count; ++b) {
    const MatF& m = target ? data[idx[first + b]].target : data[idx[first + b]].input;
    std::copy(m.v.begin(), m.v.end(), buf.begin() + static_cast<size_t>(b) * side * side);
  }
  return nn::Tensor<float>::from_data({count, 1, side, side}, std::move(buf));
}

}  // namespace detail

// Alternating one-discriminator-step / one-generator-step training.
// Each epoch draws images_per_epoch samples (without replacement when the
// dataset is large enough), processed in batch_size batches. Deterministic
// given (dataset, config.seed).
inline TrainedPair train(const std::vector<PatchSample>& data, const TrainConfig& config) {
  config.validate();
  TrainedPair out;
  out.config = config;
  for (const auto& s : data)
    if (s.target_kind != config.target_kind)
      throw InvalidArgument("train: dataset target kind does not match config");

  const int side = data.empty() ? 1 << config.depth : data.front().input.rows;
  out.generator =
      config.model == ModelKind::pix2pix
          ? nn::build_unet_generator<float>(config.base_filters, config.depth,
                                            mix_seed(config.seed, 1))
          : nn::build_residual_unet_generator<float>(config.base_filters, config.depth,
                                                     mix_seed(config.seed, 1));
  out.discriminator =
      nn::build_patchgan_discriminator<float>(config.disc_filters, mix_seed(config.seed, 2));
  if (config.epochs == 0 || data.empty()) return out;
  if (side % out.generator.side_multiple != 0)
    throw InvalidArgument("train: patch side " + std::to_string(side) +
                          " not divisible by the generator's 2^depth");

  auto& G = out.generator;
  auto& D = out.discriminator;
  G.seed_dropout(mix_seed(config.seed, 3));
  G.set_training(true);
  D.set_training(true);

  nn::AdamState<float> adam_g, adam_d;
  adam_g.lr = adam_d.lr = config.lr;
  adam_g.beta1 = adam_d.beta1 = config.beta1;
  adam_g.beta2 = adam_d.beta2 = config.beta2;

  Rng sampler = make_rng(config.seed, 4);
  const int n = static_cast<int>(data.size());
  const int per_epoch = config.images_per_epoch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> idx;
    idx.reserve(per_epoch);
    if (n >= per_epoch) {
      std::vector<int> pool(n);
      std::iota(pool.begin(), pool.end(), 0);
      for (int i = 0; i < per_epoch; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(pool[i], pool[pick(sampler)]);
      }
      idx.assign(pool.begin(), pool.begin() + per_epoch);
    } else {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int i = 0; i < per_epoch; ++i) idx.push_back(pick(sampler));
    }

    EpochRecord rec;
    const int batches = per_epoch / config.batch_size;
    for (int b = 0; b < batches; ++b) {
      const size_t first = static_cast<size_t>(b) * config.batch_size;
      auto input = detail::batch_tensor(data, idx, first, config.batch_size, false);
      auto target = detail::batch_tensor(data, idx, first, config.batch_size, true);

      auto fake = G.forward(input);

      // Discriminator step on detached fakes.
      auto d_real = D.forward(nn::concat_channels(input, target));
      auto d_fake = D.forward(nn::concat_channels(input, nn::detach(fake)));
      auto loss_d = discriminator_loss(d_real, d_fake);
      const double ld = loss_d.item();
      D.zero_grad();
      nn::backward(loss_d);
      adam_step(adam_d, D.params);

      // Generator step against the updated discriminator.
      auto d_fake2 = D.forward(nn::concat_channels(input, fake));
      auto adv = nn::bce_with_logits_mean(d_fake2, 1.0f);
      auto l1 = nn::l1_mean(fake, target);
      auto loss_g = nn::add(adv, nn::mul_scalar(l1, config.lambda_l1));
      const double lg_adv = adv.item();
      const double ll1 = l1.item();
      if (!std::isfinite(ld) || !std::isfinite(lg_adv) || !std::isfinite(ll1))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              " batch " + std::to_string(b) + " (loss_d=" + std::to_string(ld) +
                              ", loss_g=" + std::to_string(lg_adv) +
                              ", loss_l1=" + std::to_string(ll1) + ")");
      G.zero_grad();
      D.zero_grad();  // discard discriminator grads from the generator pass
      nn::backward(loss_g);
      adam_step(adam_g, G.params);

      rec.loss_d += ld;
      rec.loss_g_adv += lg_adv;
      rec.loss_l1 += ll1;
    }
    rec.loss_d /= batches;
    rec.loss_g_adv /= batches;
    rec.loss_l1 /= batches;
    out.history.push_back(rec);

    if (config.checkpoint_interval > 0 && !config.checkpoint_dir.empty() &&
        (epoch + 1) % config.checkpoint_interval == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      nn::save_checkpoint(config.checkpoint_dir /
                              ("generator_epoch" + std::to_string(epoch + 1) + ".pamg"),
                          G);
    }
  }
  G.set_training(false);
  D.set_training(false);
  return out;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("history: cannot open " + path.string());
  os << "epoch,loss_d,loss_g,loss_l1\n";
  char line[160];
  for (size_t i = 0; i < history.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g\n", i + 1, history[i].loss_d,
                  history[i].loss_g_adv, history[i].loss_l1);
    os << line;
  }
}

// ---------------------------------------------------------------------------
// Whole-frame prediction by overlapping patches

// Row starts covering [0, rows) with `stride` spacing. When the stride does
// not tile the frame, the last window is clamped to the bottom edge (and the
// now-redundant regular start dropped if coverage stays gap-free), so every
// row is covered by exactly one or two windows and stitching weights sum to
// one. A 2000-row frame with 128-row patches at stride 64 gives 30 windows.
inline std::vector<int> patch_row_starts(int rows, int side, int stride) {
  if (rows < side) throw InvalidArgument("predict_frame: frame shorter than one patch");
  if (stride < 1) throw InvalidArgument("predict_frame: stride must be >= 1");
  std::vector<int> starts;
  for (int r = 0; r + side <= rows; r += stride) starts.push_back(r);
  const int clamped = rows - side;
  if (starts.back() < clamped) {
    if (starts.size() > 1 && clamped <= starts[starts.size() - 2] + side) starts.pop_back();
    starts.push_back(clamped);
  }
  return starts;
}

// Runs the generator over vertically overlapping (n_e x n_e) windows and
// averages overlapped rows back into a frame-shaped output.
inline RfFrame predict_frame(nn::ModelGraph<float>& generator, const RfFrame& frame,
                             int stride = 0) {
  const int side = frame.geometry.n_elements;
  const int rows = frame.geometry.n_samples;
  if (stride <= 0) stride = side / 2;
  if (frame.samples.max_abs() > 1.0f + 1e-5f)
    throw InvalidArgument("predict_frame: frame must be normalized to [-1, 1]");
  const auto starts = patch_row_starts(rows, side, stride);

  const bool was_training = generator.training;
  generator.set_training(false);
  const int P = static_cast<int>(starts.size());
  std::vector<float> buf(static_cast<size_t>(P) * side * side);
  for (int p = 0; p < P; ++p)
    for (int r = 0; r < side; ++r)
      std::copy_n(frame.samples.row_ptr(starts[p] + r), side,
                  buf.begin() + (static_cast<size_t>(p) * side + r) * side);
  auto pred = generator.forward(
      nn::Tensor<float>::from_data({P, 1, side, side}, std::move(buf)));
  generator.set_training(was_training);

  RfFrame out{MatF(rows, side, 0.0f), frame.geometry, frame.frames_averaged};
  std::vector<float> weight(rows, 0.0f);
  const auto& pv = pred.values();
  for (int p = 0; p < P; ++p)
    for (int r = 0; r < side; ++r) {
      const float* src = pv.data() + (static_cast<size_t>(p) * side + r) * side;
      float* dst = out.samples.row_ptr(starts[p] + r);
      for (int c = 0; c < side; ++c) dst[c] += src[c];
      weight[starts[p] + r] += 1.0f;
    }
  for (int r = 0; r < rows; ++r) {
    const float inv = 1.0f / weight[r];
    float* dst = out.samples.row_ptr(r);
    for (int c = 0; c < side; ++c) dst[c] *= inv;
  }
  return out;
}

// Sequential denoise -> renormalize -> reconstruct pipeline.
inline DasImage dual_gan(nn::ModelGraph<float>& denoiser, nn::ModelGraph<float>& reconstructor,
                         const RfFrame& frame) {
  RfFrame denoised = predict_frame(denoiser, frame);
  auto [renorm, scale] = normalize(denoised);
  RfFrame recon = predict_frame(reconstructor, renorm);
  return DasImage{mat_cast<double>(recon.samples), frame.geometry};
}

// ---------------------------------------------------------------------------
// Thresholded source detection (proxy for the visual success judgment)

// Median peak magnitude over a set of reference reconstructions; the
// detection threshold is expressed as a fraction of this constant.
inline double calibrate_detection(const std::vector<DasImage>& training_references) {
  if (training_references.empty())
    throw InvalidArgument("calibrate_detection: no reference reconstructions");
  std::vector<double> peaks;
  peaks.reserve(training_references.size());
  for (const auto& img : training_references) peaks.push_back(img.pixels.max_abs());
  std::sort(peaks.begin(), peaks.end());
  const size_t n = peaks.size();
  return n % 2 ? peaks[n / 2] : 0.5 * (peaks[n / 2 - 1] + peaks[n / 2]);
}

inline std::optional<PointTarget> detect_source(const DasImage& reconstruction, double threshold,
                                                double calibration_peak) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw InvalidArgument("detect_source: threshold must be in (0, 1)");
  if (!(calibration_peak > 0.0))
    throw InvalidArgument("detect_source: calibration peak must be > 0");
  if (reconstruction.pixels.max_abs() <= threshold * calibration_peak) return std::nullopt;
  return locate_peak(reconstruction);
}

}  // namespace pagan

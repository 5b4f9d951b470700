#include <gtest/gtest.h>

#include <cmath>

#include "pagan/gan.hpp"
#include "pagan/metrics.hpp"
#include "pagan/simulate.hpp"

using namespace pagan;
using TF = nn::Tensor<float>;

namespace {

TF random_patch_tensor(int n, int c, int side, uint64_t seed, float scale = 1.f) {
  Rng rng = make_rng(seed);
  std::normal_distribution<float> dist(0.f, scale);
  std::vector<float> v(static_cast<size_t>(n) * c * side * side);
  for (auto& x : v) x = dist(rng);
  return TF::from_data({n, c, side, side}, std::move(v));
}

// Generator that copies its input: one 1x1 conv with unit weight, no tanh.
nn::ModelGraph<float> identity_generator() {
  nn::detail::GraphBuilder<float> b(1, 1, 0);
  b.conv(1, 1, 1, 0, true);
  auto g = b.take();
  g.params[0].values()[0] = 1.f;
  g.params[1].values()[0] = 0.f;
  return g;
}

std::vector<PatchSample> toy_dataset(int count, int side, uint64_t seed, float noise_std,
                                     TargetKind kind = TargetKind::reference) {
  Rng rng = make_rng(seed);
  std::normal_distribution<float> noise(0.f, noise_std);
  std::uniform_real_distribution<float> pos(0.2f, 0.8f);
  std::vector<PatchSample> out;
  for (int i = 0; i < count; ++i) {
    PatchSample s;
    s.target_kind = kind;
    s.input = MatF(side, side);
    s.target = MatF(side, side);
    // target: a clean horizontal band; input: the band plus noise
    const int band = static_cast<int>(pos(rng) * side);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const float clean = std::exp(-0.5f * (r - band) * (r - band) / 4.f);
        s.target.at(r, c) = clean;
        s.input.at(r, c) = std::clamp(clean + noise(rng), -1.f, 1.f);
      }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(GanLosses, UninformativeDiscriminatorScoresLn2) {
  auto zeros = TF::zeros({2, 1, 3, 3});
  auto fake = random_patch_tensor(2, 1, 4, 1);
  auto target = fake;  // perfect generator
  auto [loss_d, loss_g] = gan_losses(zeros, zeros, fake, target, 1000.f);
  EXPECT_NEAR(loss_d.item(), std::log(2.0), 1e-6);
  EXPECT_NEAR(loss_g.item(), std::log(2.0), 1e-6);  // L1 term vanishes exactly
}

TEST(GanLosses, FakeEqualsTargetKillsL1Term) {
  auto logits = random_patch_tensor(1, 1, 3, 2);
  auto fake = random_patch_tensor(1, 1, 4, 3);
  auto [d0, g0] = gan_losses(logits, logits, fake, fake, 12345.f);
  auto [d1, g1] = gan_losses(logits, logits, fake, fake, 0.f);
  EXPECT_NEAR(g0.item(), g1.item(), 1e-12);
}

TEST(GanLosses, LambdaZeroIsPureAdversarial) {
  auto logits = TF::zeros({1, 1, 2, 2});
  auto fake = random_patch_tensor(1, 1, 4, 4);
  auto target = random_patch_tensor(1, 1, 4, 5);
  auto [d, g] = gan_losses(logits, logits, fake, target, 0.f);
  EXPECT_NEAR(g.item(), std::log(2.0), 1e-6);
}

TEST(GanLosses, NonFiniteInputsRejected) {
  auto logits = TF::zeros({1, 1, 2, 2});
  auto bad = TF::from_data({1, 1, 1, 1}, {std::numeric_limits<float>::quiet_NaN()});
  auto ok = TF::zeros({1, 1, 1, 1});
  EXPECT_THROW(gan_losses(logits, logits, bad, ok, 1.f), DivergenceError);
}

TEST(Stitching, PaperScaleWindowLayout) {
  const auto starts = patch_row_starts(2000, 128, 64);
  EXPECT_EQ(starts.size(), 30u);
  EXPECT_EQ(starts.front(), 0);
  EXPECT_EQ(starts.back(), 2000 - 128);
  // partition property: every row covered by exactly 1 or 2 windows
  std::vector<int> cover(2000, 0);
  for (int s : starts)
    for (int r = s; r < s + 128; ++r) cover[r] += 1;
  for (int r = 0; r < 2000; ++r) {
    EXPECT_GE(cover[r], 1) << "row " << r;
    EXPECT_LE(cover[r], 2) << "row " << r;
  }
  // boundary rows are covered once, the bulk twice
  for (int r = 0; r < 64; ++r) EXPECT_EQ(cover[r], 1);
  for (int r = 64; r < 1856; ++r) EXPECT_EQ(cover[r], 2);
  for (int r = 1920; r < 2000; ++r) EXPECT_EQ(cover[r], 1);
}

TEST(Stitching, ExactTilingNeedsNoClamp) {
  const auto starts = patch_row_starts(256, 64, 32);
  EXPECT_EQ(starts.back(), 192);
  EXPECT_EQ(starts.size(), 7u);
}

TEST(PredictFrame, IdentityGeneratorReproducesInput) {
  auto gen = identity_generator();
  AcquisitionGeometry g;
  g.n_samples = 300;
  g.n_elements = 32;
  g.n_frames = 1;
  RfFrame frame{MatF(300, 32), g, 1};
  Rng rng = make_rng(5);
  std::uniform_real_distribution<float> dist(-1.f, 1.f);
  for (auto& v : frame.samples.v) v = dist(rng);
  auto out = predict_frame(gen, frame);
  ASSERT_EQ(out.samples.rows, 300);
  ASSERT_EQ(out.samples.cols, 32);
  for (size_t i = 0; i < out.samples.size(); ++i)
    EXPECT_NEAR(out.samples.v[i], frame.samples.v[i], 1e-6f);
}

TEST(PredictFrame, RejectsShortOrUnnormalizedFrames) {
  auto gen = identity_generator();
  AcquisitionGeometry g;
  g.n_samples = 16;
  g.n_elements = 32;
  RfFrame frame{MatF(16, 32, 0.5f), g, 1};
  EXPECT_THROW(predict_frame(gen, frame), InvalidArgument);  // shorter than one patch

  g.n_samples = 64;
  RfFrame loud{MatF(64, 32, 2.0f), g, 1};
  EXPECT_THROW(predict_frame(gen, loud), InvalidArgument);  // not normalized
}

TEST(Train, ZeroEpochsGivesUntrainedPairWithEmptyHistory) {
  auto data = toy_dataset(8, 32, 1, 0.3f);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  cfg.images_per_epoch = 8;
  cfg.base_filters = 4;
  cfg.depth = 2;
  cfg.disc_filters = 4;
  auto pair = train(data, cfg);
  EXPECT_TRUE(pair.history.empty());
  EXPECT_GT(pair.generator.param_count(), 0);
}

TEST(Train, TargetKindMismatchRejected) {
  auto data = toy_dataset(4, 32, 2, 0.3f, TargetKind::segmented);
  TrainConfig cfg;
  cfg.target_kind = TargetKind::reference;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.images_per_epoch = 4;
  EXPECT_THROW(train(data, cfg), InvalidArgument);
}

TEST(Train, SameSeedBitIdenticalParameters) {
  auto data = toy_dataset(16, 32, 3, 0.3f);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.images_per_epoch = 8;
  cfg.base_filters = 4;
  cfg.depth = 2;
  cfg.disc_filters = 4;
  cfg.seed = 99;
  auto a = train(data, cfg);
  auto b = train(data, cfg);
  ASSERT_EQ(a.generator.params.size(), b.generator.params.size());
  for (size_t p = 0; p < a.generator.params.size(); ++p)
    EXPECT_EQ(a.generator.params[p].values(), b.generator.params[p].values());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t e = 0; e < a.history.size(); ++e)
    EXPECT_EQ(a.history[e].loss_l1, b.history[e].loss_l1);
}

// Desk-scale smoke at unit-test size: L1 drops under supervised pressure.
TEST(Train, L1LossDecreasesOnToyProblem) {
  auto data = toy_dataset(64, 32, 4, 0.4f);
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 8;
  cfg.images_per_epoch = 32;
  cfg.base_filters = 4;
  cfg.depth = 2;
  cfg.disc_filters = 4;
  cfg.seed = 7;
  auto pair = train(data, cfg);
  ASSERT_EQ(pair.history.size(), 25u);
  EXPECT_LT(pair.history.back().loss_l1, 0.5 * pair.history.front().loss_l1);
  for (const auto& rec : pair.history) {
    EXPECT_TRUE(std::isfinite(rec.loss_d));
    EXPECT_TRUE(std::isfinite(rec.loss_g_adv));
  }
}

// Discriminator alone on a separable toy set: loss_d strictly decreases
// over 50 steps.
TEST(Train, DiscriminatorLearnsSeparableToySet) {
  const int side = 32;
  auto d = nn::build_patchgan_discriminator<float>(4, 5);
  d.set_training(true);
  nn::AdamState<float> adam;
  adam.lr = 1e-3f;
  adam.beta1 = 0.5f;

  auto cond = random_patch_tensor(8, 1, side, 10, 0.3f);
  auto real = TF::from_data({8, 1, side, side},
                            std::vector<float>(8 * side * side, 0.8f));  // bright = real
  auto fake = TF::from_data({8, 1, side, side},
                            std::vector<float>(8 * side * side, -0.8f));  // dark = fake

  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    auto d_real = d.forward(nn::concat_channels(cond, real));
    auto d_fake = d.forward(nn::concat_channels(cond, fake));
    auto loss = discriminator_loss(d_real, d_fake);
    if (step == 0) first = loss.item();
    last = loss.item();
    d.zero_grad();
    nn::backward(loss);
    adam_step(adam, d.params);
  }
  EXPECT_LT(last, first);
  EXPECT_LT(last, 0.6);  // well below ln 2
}

TEST(DetectSource, ThresholdSemantics) {
  AcquisitionGeometry g;
  g.n_samples = 32;
  g.n_elements = 8;
  DasImage img{MatD(32, 8, 0.0), g};
  EXPECT_FALSE(detect_source(img, 0.5, 1.0).has_value());  // all-zero image

  img.pixels.at(10, 3) = 0.9;
  auto hit = detect_source(img, 0.5, 1.0);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->row, 10);
  EXPECT_EQ(hit->col, 3);

  // half-amplitude image against a threshold of ~1 stays undetected
  img.pixels.at(10, 3) = 0.5;
  EXPECT_FALSE(detect_source(img, 0.999, 1.0).has_value());

  EXPECT_THROW(detect_source(img, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(detect_source(img, 1.0, 1.0), InvalidArgument);
}

TEST(DetectSource, ExactTargetOfCleanDasIsDetected) {
  AcquisitionGeometry g;
  g.n_samples = 256;
  g.n_elements = 32;
  SourceSpec s;
  s.axial_m = 0.004;
  s.pulse_width_s = 5e-8;
  auto das = das_reconstruct(synthesize_clean(g, s));
  auto peak = locate_peak(das);
  auto exact = exact_target(das, peak);
  const double calibration = das.pixels.max_abs();
  auto hit = detect_source(exact, 0.5, calibration);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->row, peak.row);
  EXPECT_EQ(hit->col, peak.col);
}

TEST(Calibration, MedianOfPeaks) {
  AcquisitionGeometry g;
  g.n_samples = 4;
  g.n_elements = 2;
  auto mk = [&](double peak) {
    DasImage img{MatD(4, 2, 0.0), g};
    img.pixels.at(0, 0) = peak;
    return img;
  };
  EXPECT_DOUBLE_EQ(calibrate_detection({mk(1.0), mk(5.0), mk(3.0)}), 3.0);
  EXPECT_DOUBLE_EQ(calibrate_detection({mk(1.0), mk(3.0)}), 2.0);
}

TEST(History, CsvFormat) {
  std::vector<EpochRecord> history = {{0.5, 0.7, 0.25}, {0.4, 0.8, 0.125}};
  const auto path = std::filesystem::temp_directory_path() / "pagan_test_history.csv";
  write_history_csv(path, history);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,loss_d,loss_g,loss_l1");
  std::getline(is, line);
  EXPECT_EQ(line, "1,0.5,0.7,0.25");
  std::filesystem::remove(path);
}

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pagan/beamform.hpp"
#include "pagan/errors.hpp"
#include "pagan/gan.hpp"
#include "pagan/mat.hpp"
#include "pagan/rf.hpp"

namespace pagan {

inline double mse(const MatF& reference, const MatF& candidate) {
  if (!reference.same_shape(candidate)) throw InvalidArgument("mse: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference.v[i]) - candidate.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(reference.size());
}

// Single global SSIM over the whole image: means, (n-1)-denominator standard
// deviations and cross term, stabilizers c1 = 0.01 and c2 = 0.03 applied as
// absolute constants.
inline double ssim(const MatF& reference, const MatF& candidate) {
  if (!reference.same_shape(candidate)) throw InvalidArgument("ssim: shape mismatch");
  const size_t n = reference.size();
  if (n < 2) throw InvalidArgument("ssim: need at least 2 pixels");

  double sum_r = 0.0, sum_c = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sum_r += reference.v[i];
    sum_c += candidate.v[i];
  }
  const double mu_r = sum_r / n, mu_c = sum_c / n;

  double var_r = 0.0, var_c = 0.0, cov = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dr = reference.v[i] - mu_r;
    const double dc = candidate.v[i] - mu_c;
    var_r += dr * dr;
    var_c += dc * dc;
    cov += dr * dc;
  }
  const double denom = static_cast<double>(n - 1);
  var_r /= denom;
  var_c /= denom;
  cov /= denom;

  constexpr double c1 = 0.01, c2 = 0.03;
  return ((2.0 * mu_r * mu_c + c1) * (2.0 * cov + c2)) /
         ((mu_r * mu_r + mu_c * mu_c + c1) * (var_r + var_c + c2));
}

// Sliding-window mean SSIM, for comparison against the global form.
inline double ssim_windowed(const MatF& reference, const MatF& candidate, int window = 8,
                            int stride = 4) {
  if (!reference.same_shape(candidate)) throw InvalidArgument("ssim: shape mismatch");
  if (window < 2 || window > std::min(reference.rows, reference.cols))
    throw InvalidArgument("ssim_windowed: bad window");
  double acc = 0.0;
  int64_t count = 0;
  for (int r = 0; r + window <= reference.rows; r += stride)
    for (int c = 0; c + window <= reference.cols; c += stride) {
      MatF a(window, window), b(window, window);
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          a.at(i, j) = reference.at(r + i, c + j);
          b.at(i, j) = candidate.at(r + i, c + j);
        }
      acc += ssim(a, b);
      ++count;
    }
  return acc / static_cast<double>(count);
}

// Euclidean distance in pixel units between a detected peak and the ground
// truth position mapped onto the DAS grid.
inline double localization_error(const PointTarget& predicted, double truth_axial_m,
                                 double truth_lateral_m, const AcquisitionGeometry& g) {
  const auto [row, col] = truth_to_pixel(g, truth_axial_m, truth_lateral_m);
  const double dr = predicted.row - row;
  const double dc = predicted.col - col;
  return std::sqrt(dr * dr + dc * dc);
}

// ---------------------------------------------------------------------------
// Latency benchmark

struct LatencySummary {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double min_ms = 0.0;
  int iters = 0;
  int threads = 1;
};

// Wall-clock per-frame prediction latency after warmup discards. Timing
// covers patching, the generator forwards and stitching; file I/O and
// normalization are outside the clock.
inline LatencySummary benchmark_inference(nn::ModelGraph<float>& generator, const RfFrame& frame,
                                          int warmup, int iters) {
  if (iters < 2) throw InvalidArgument("benchmark_inference: iters must be >= 2");
  for (int i = 0; i < warmup; ++i) (void)predict_frame(generator, frame);

  std::vector<double> ms(iters);
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)predict_frame(generator, frame);
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  LatencySummary s;
  s.iters = iters;
  s.threads = thread_count();
  double sum = 0.0, mn = ms[0];
  for (double v : ms) {
    sum += v;
    mn = std::min(mn, v);
  }
  s.mean_ms = sum / iters;
  s.min_ms = mn;
  double var = 0.0;
  for (double v : ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(var / (iters - 1));
  return s;
}

// ---------------------------------------------------------------------------
// Denoiser evaluation against the temporally-averaged reference

struct EvalReport {
  double mse = 0.0;
  double ssim = 0.0;
  std::optional<double> localization_error_px;
  bool detected = false;
  std::optional<LatencySummary> latency;
};

struct MethodRow {
  std::string method;
  double mse_mean = 0.0, mse_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
  std::optional<LatencySummary> latency;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double var = 0.0;
    for (double x : xs) var += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(var / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct DenoiserEvalOptions {
  int median_window = 5;
  std::vector<int> average_baselines = {10, 20};
  bool with_latency = false;
  int bench_warmup = 2;
  int bench_iters = 5;
};

struct DenoiserEvalResult {
  std::vector<MethodRow> rows;
  // per stack, per method: raw reports in row order
  std::vector<std::vector<EvalReport>> reports;
  std::vector<std::string> methods;
};

namespace detail {

inline MatF normalized_or_zero(const MatF& m) {
  const float s = m.max_abs();
  MatF out = m;
  if (s > 0) {
    const float inv = 1.0f / s;
    for (float& x : out.v) x *= inv;
  }
  return out;
}

}  // namespace detail

// For every test stack, scores the single noisy frame, the k-frame-average
// baselines and the model prediction against the stack's reference, all on
// independently max-abs-normalized frames. Row layout mirrors the reporting
// table: one row per method with mean +- std over stacks.
inline DenoiserEvalResult evaluate_denoiser(nn::ModelGraph<float>& generator,
                                            const std::vector<FrameStack>& test_stacks,
                                            const DenoiserEvalOptions& opt = {}) {
  if (test_stacks.empty()) throw InvalidArgument("evaluate_denoiser: no test stacks");
  DenoiserEvalResult result;
  result.methods.push_back("noisy");
  for (int k : opt.average_baselines)
    result.methods.push_back("avg" + std::to_string(k));
  result.methods.push_back("model");

  std::vector<std::vector<double>> mses(result.methods.size()),
      ssims(result.methods.size());
  result.reports.resize(result.methods.size());

  for (const auto& stack : test_stacks) {
    const RfFrame reference = build_reference(stack, opt.median_window);
    const MatF ref_n = detail::normalized_or_zero(reference.samples);

    std::vector<MatF> candidates;
    candidates.push_back(detail::normalized_or_zero(stack.frames.front().samples));
    for (int k : opt.average_baselines) {
      if (stack.count() < k)
        throw InvalidArgument("evaluate_denoiser: stack too short for avg" + std::to_string(k));
      auto avg = temporal_average(stack, k, StridePolicy::disjoint);
      candidates.push_back(detail::normalized_or_zero(avg.front().samples));
    }
    {
      RfFrame noisy_n{detail::normalized_or_zero(stack.frames.front().samples),
                      stack.geometry(), 1};
      RfFrame pred = predict_frame(generator, noisy_n);
      candidates.push_back(pred.samples);
    }

    for (size_t m = 0; m < candidates.size(); ++m) {
      EvalReport rep;
      rep.mse = mse(ref_n, candidates[m]);
      rep.ssim = ssim(ref_n, candidates[m]);
      mses[m].push_back(rep.mse);
      ssims[m].push_back(rep.ssim);
      result.reports[m].push_back(rep);
    }
  }

  for (size_t m = 0; m < result.methods.size(); ++m) {
    MethodRow row;
    row.method = result.methods[m];
    const auto ms = mean_std(mses[m]);
    const auto ss = mean_std(ssims[m]);
    row.mse_mean = ms.mean;
    row.mse_std = ms.std;
    row.ssim_mean = ss.mean;
    row.ssim_std = ss.std;
    result.rows.push_back(row);
  }
  if (opt.with_latency) {
    RfFrame noisy_n{detail::normalized_or_zero(test_stacks.front().frames.front().samples),
                    test_stacks.front().geometry(), 1};
    result.rows.back().latency =
        benchmark_inference(generator, noisy_n, opt.bench_warmup, opt.bench_iters);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report serialization

inline std::string format_pm(double mean, double std, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f \xc2\xb1 %.*f", decimals, mean, decimals, std);
  return buf;
}

inline void write_eval_csv(const std::filesystem::path& path,
                           const std::vector<MethodRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("report: cannot open " + path.string());
  os << "method,mse_mean,mse_std,ssim_mean,ssim_std,latency_ms_mean,latency_ms_std\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.latency) {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.method.c_str(),
                    r.mse_mean, r.mse_std, r.ssim_mean, r.ssim_std, r.latency->mean_ms,
                    r.latency->std_ms);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,,\n", r.method.c_str(), r.mse_mean,
                    r.mse_std, r.ssim_mean, r.ssim_std);
    }
    os << buf;
  }
}

inline std::string format_eval_table(const std::vector<MethodRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-17s %-17s %s\n", "method", "MSE", "SSIM",
                "latency [ms]");
  out += line;
  for (const auto& r : rows) {
    const std::string lat =
        r.latency ? format_pm(r.latency->mean_ms, r.latency->std_ms, 1) : std::string("-");
    std::snprintf(line, sizeof(line), "%-10s %-17s %-17s %s\n", r.method.c_str(),
                  format_pm(r.mse_mean, r.mse_std).c_str(),
                  format_pm(r.ssim_mean, r.ssim_std).c_str(), lat.c_str());
    out += line;
  }
  return out;
}

}  // namespace pagan

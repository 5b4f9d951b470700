#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/geometry.hpp"
#include "pagan/mat.hpp"

namespace pagan {

// One pre-beamformed acquisition: (n_samples x n_elements), time-major.
struct RfFrame {
  MatF samples;
  AcquisitionGeometry geometry;
  int frames_averaged = 1;

  void validate() const {
    if (samples.rows != geometry.n_samples || samples.cols != geometry.n_elements)
      throw InvalidArgument("RfFrame: sample matrix does not match geometry");
    if (!samples.all_finite()) throw InvalidArgument("RfFrame: non-finite samples");
  }
};

struct SourceTruth {
  double lateral_m = 0.0;
  double axial_m = 0.0;
};

// All frames recorded at one acquisition spot, sharing one geometry.
struct FrameStack {
  std::vector<RfFrame> frames;
  std::optional<SourceTruth> source_truth;

  const AcquisitionGeometry& geometry() const {
    if (frames.empty()) throw InvalidArgument("FrameStack: empty stack");
    return frames.front().geometry;
  }
  int count() const { return static_cast<int>(frames.size()); }
};

// true = background pixel. Must contain at least one of each class to be
// usable for background-median replacement.
struct BackgroundMask {
  Mat<uint8_t> mask;

  void validate() const {
    size_t bg = 0;
    for (uint8_t m : mask.v) bg += (m != 0);
    if (bg == 0) throw InvalidArgument("BackgroundMask: no background pixels");
    if (bg == mask.size()) throw InvalidArgument("BackgroundMask: no signal pixels");
  }
};

enum class StridePolicy { disjoint, sliding };

// Element-wise mean of k consecutive frames. disjoint: floor(n/k) outputs;
// sliding: n-k+1 outputs.
inline std::vector<RfFrame> temporal_average(const FrameStack& stack, int k,
                                             StridePolicy policy = StridePolicy::disjoint) {
  const int n = stack.count();
  if (n == 0) throw InvalidArgument("temporal_average: empty stack");
  if (k < 1 || k > n) throw InvalidArgument("temporal_average: k must be in [1, n_frames]");

  const auto& geom = stack.geometry();
  const int step = (policy == StridePolicy::disjoint) ? k : 1;
  const int count = (policy == StridePolicy::disjoint) ? n / k : n - k + 1;

  std::vector<RfFrame> out;
  out.reserve(count);
  const size_t numel = stack.frames.front().samples.size();
  for (int w = 0; w < count; ++w) {
    const int first = w * step;
    std::vector<double> acc(numel, 0.0);
    for (int f = first; f < first + k; ++f) {
      const auto& src = stack.frames[f].samples.v;
      for (size_t i = 0; i < numel; ++i) acc[i] += src[i];
    }
    RfFrame frame{MatF(geom.n_samples, geom.n_elements), geom, k};
    const double inv = 1.0 / k;
    for (size_t i = 0; i < numel; ++i) frame.samples.v[i] = static_cast<float>(acc[i] * inv);
    out.push_back(std::move(frame));
  }
  return out;
}

// 1-D median filter along the time axis of each element column.
// Boundaries use edge replication so the frame keeps its shape.
inline RfFrame median_filter_temporal(const RfFrame& frame, int window) {
  if (window < 1 || window % 2 == 0)
    throw InvalidArgument("median_filter_temporal: window must be odd and >= 1");
  if (window > frame.geometry.n_samples)
    throw InvalidArgument("median_filter_temporal: window exceeds n_samples");
  if (window == 1) return frame;

  const int rows = frame.samples.rows, cols = frame.samples.cols;
  const int half = window / 2;
  RfFrame out{MatF(rows, cols), frame.geometry, frame.frames_averaged};
  std::vector<float> buf(window);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      for (int w = -half; w <= half; ++w) {
        const int rr = std::clamp(r + w, 0, rows - 1);
        buf[w + half] = frame.samples.at(rr, c);
      }
      std::nth_element(buf.begin(), buf.begin() + half, buf.end());
      out.samples.at(r, c) = buf[half];
    }
  }
  return out;
}

// Reference construction: average every frame of the stack, then median
// filter each column. frames_averaged = n_f.
inline RfFrame build_reference(const FrameStack& stack, int median_window = 5) {
  if (stack.count() == 0) throw InvalidArgument("build_reference: empty stack");
  auto averaged = temporal_average(stack, stack.count(), StridePolicy::disjoint);
  return median_filter_temporal(averaged.front(), median_window);
}

// Replace every background pixel with the single scalar median of all
// background pixels (the segmented image X_s). Signal pixels untouched.
inline RfFrame apply_background_median(const RfFrame& frame, const BackgroundMask& mask) {
  if (mask.mask.rows != frame.samples.rows || mask.mask.cols != frame.samples.cols)
    throw InvalidArgument("apply_background_median: mask shape mismatch");
  mask.validate();

  std::vector<float> bg;
  bg.reserve(mask.mask.size());
  for (size_t i = 0; i < mask.mask.size(); ++i)
    if (mask.mask.v[i]) bg.push_back(frame.samples.v[i]);
  if (bg.empty()) throw InvalidArgument("apply_background_median: empty background");

  const size_t mid = bg.size() / 2;
  std::nth_element(bg.begin(), bg.begin() + mid, bg.end());
  float median = bg[mid];
  if (bg.size() % 2 == 0) {
    const float lo = *std::max_element(bg.begin(), bg.begin() + mid);
    median = 0.5f * (lo + median);
  }

  RfFrame out = frame;
  for (size_t i = 0; i < mask.mask.size(); ++i)
    if (mask.mask.v[i]) out.samples.v[i] = median;
  return out;
}

// Max-abs normalization to [-1, 1]; returns the scale for inversion.
inline std::pair<RfFrame, float> normalize(const RfFrame& frame) {
  if (!frame.samples.all_finite()) throw InvalidArgument("normalize: non-finite frame");
  const float scale = frame.samples.max_abs();
  if (scale == 0.0f) throw DegenerateInput("normalize: all-zero frame");
  RfFrame out = frame;
  const float inv = 1.0f / scale;
  for (float& x : out.samples.v) x *= inv;
  return {std::move(out), scale};
}

inline RfFrame denormalize(const RfFrame& frame, float scale) {
  RfFrame out = frame;
  for (float& x : out.samples.v) x *= scale;
  return out;
}

}  // namespace pagan

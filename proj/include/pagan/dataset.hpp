#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/parf.hpp"
#include "pagan/rf.hpp"
#include "pagan/rng.hpp"
#include "pagan/simulate.hpp"

namespace pagan {

enum class PatchKind { signal, noise };
enum class TargetKind { reference, segmented, exact_reconstruction };
enum class SplitKind { train, val, test };

inline const char* to_string(TargetKind t) {
  switch (t) {
    case TargetKind::reference: return "reference";
    case TargetKind::segmented: return "segmented";
    case TargetKind::exact_reconstruction: return "exact";
  }
  return "?";
}

inline const char* to_string(SplitKind s) {
  switch (s) {
    case SplitKind::train: return "train";
    case SplitKind::val: return "val";
    case SplitKind::test: return "test";
  }
  return "?";
}

inline TargetKind target_kind_from_string(const std::string& s) {
  if (s == "reference") return TargetKind::reference;
  if (s == "segmented") return TargetKind::segmented;
  if (s == "exact" || s == "exact_reconstruction") return TargetKind::exact_reconstruction;
  throw InvalidArgument("unknown target kind: " + s);
}

struct PatchOrigin {
  int stack_id = 0;
  int top_row = 0;
  int window_step = 0;  // 0 .. 2*steps, in top-to-bottom order
};

// One training pair: an (n_e x n_e) input patch and the co-located target
// patch, both normalized to [-1, 1].
struct PatchSample {
  MatF input;
  MatF target;
  PatchKind kind = PatchKind::signal;
  TargetKind target_kind = TargetKind::reference;
  int frames_averaged = 1;
  PatchOrigin origin;
};

struct BucketCounts {
  int64_t frame_samples = 0;
  int64_t signal_patches = 0;
  int64_t noise_patches = 0;
};

struct DatasetManifest {
  std::map<int, BucketCounts> per_frames_averaged;
  TargetKind target_kind = TargetKind::reference;
  SplitKind split = SplitKind::train;
  uint64_t seed = 0;
  int patch_side = 0;
  int64_t patch_count = 0;

  int64_t total_frame_samples() const {
    int64_t n = 0;
    for (const auto& [k, c] : per_frames_averaged) n += c.frame_samples;
    return n;
  }

  void validate_balance() const {
    for (const auto& [k, c] : per_frames_averaged)
      if (c.signal_patches != c.noise_patches)
        throw InvalidArgument("manifest: unbalanced bucket for frames_averaged=" +
                              std::to_string(k));
  }
};

// ---------------------------------------------------------------------------
// Frame sampling

// Uniform selection without replacement from a pool of frame variants.
// Selection size is floor(fraction * count), at least 1; the paper's 5%
// sampling of 260/86/52-frame pools gives 13/4/2.
inline std::vector<RfFrame> sample_frames(const std::vector<RfFrame>& pool, double fraction,
                                          uint64_t seed) {
  if (pool.empty()) throw InvalidArgument("sample_frames: empty pool");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw InvalidArgument("sample_frames: fraction must be in (0, 1]");
  const int n = static_cast<int>(pool.size());
  const int take = std::max(1, static_cast<int>(std::floor(fraction * n)));

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, 0x5a17);
  for (int i = 0; i < take; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());

  std::vector<RfFrame> out;
  out.reserve(take);
  for (int i : idx) out.push_back(pool[i]);
  return out;
}

inline std::vector<RfFrame> sample_frames(const FrameStack& stack, double fraction,
                                          uint64_t seed) {
  return sample_frames(stack.frames, fraction, seed);
}

// ---------------------------------------------------------------------------
// Moving-window patch extraction

// 2*steps+1 patches of (n_e x n_e): the anchor window (top row = anchor_row)
// plus `steps` shifts up and down by step_size rows, returned top-to-bottom.
// anchor_col is part of the interface for symmetry but a patch always spans
// all n_e columns.
inline std::vector<MatF> extract_moving_window(const MatF& frame, int anchor_row, int anchor_col,
                                               int steps, int step_size) {
  const int side = frame.cols;
  if (anchor_col < 0 || anchor_col >= frame.cols)
    throw InvalidArgument("extract_moving_window: anchor_col out of range");
  if (steps < 0 || step_size < 0) throw InvalidArgument("extract_moving_window: negative steps");
  const int lo = anchor_row - steps * step_size;
  const int hi = anchor_row + steps * step_size;
  if (lo < 0 || hi + side > frame.rows)
    throw InvalidArgument("extract_moving_window: window out of bounds (rows " +
                          std::to_string(lo) + ".." + std::to_string(hi + side) + " of " +
                          std::to_string(frame.rows) + ")");

  std::vector<MatF> out;
  out.reserve(2 * steps + 1);
  for (int k = -steps; k <= steps; ++k) {
    const int top = anchor_row + k * step_size;
    MatF patch(side, side);
    for (int r = 0; r < side; ++r)
      std::copy_n(frame.row_ptr(top + r), side, patch.row_ptr(r));
    out.push_back(std::move(patch));
  }
  return out;
}

inline std::vector<MatF> extract_moving_window(const RfFrame& frame, int anchor_row,
                                               int anchor_col, int steps, int step_size) {
  return extract_moving_window(frame.samples, anchor_row, anchor_col, steps, step_size);
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct PatchConfig {
  double fraction = 0.05;
  int steps = 10;
  int step_size = 8;
  uint64_t seed = 0;
  TargetKind target_kind = TargetKind::reference;
};

// One acquisition spot prepared for patch extraction: the raw stack (with
// simulator ground truth) and its already-built target frame.
struct StackForPatches {
  FrameStack stack;
  MatF target;  // reference / segmented / exact-reconstruction frame
  int stack_id = 0;
};

namespace detail {

// Top row of the signal anchor window: the patch is centered on the apex of
// the arrival-time parabola, clamped so all moving-window shifts fit.
inline int signal_anchor_row(const AcquisitionGeometry& g, const SourceTruth& truth, int side,
                             int steps, int step_size) {
  SourceSpec spec;
  spec.lateral_m = truth.lateral_m;
  spec.axial_m = truth.axial_m;
  int apex = g.n_samples;
  for (int e = 0; e < g.n_elements; ++e)
    apex = std::min(apex, arrival_sample(g, spec, e));
  const int margin = steps * step_size;
  const int top = apex - side / 2;
  const int lo = margin;
  const int hi = g.n_samples - side - margin;
  if (hi < lo) throw InvalidArgument("signal anchor: frame too short for moving window");
  return std::clamp(top, lo, hi);
}

// Noise anchor: drawn from rows at least one patch height away from the
// signal window, with room for the moving window.
inline int noise_anchor_row(const AcquisitionGeometry& g, int signal_top, int side, int steps,
                            int step_size, Rng& rng) {
  const int margin = steps * step_size;
  const int lo = margin;
  const int hi = g.n_samples - side - margin;
  std::vector<std::pair<int, int>> ranges;  // candidate [a, b] of top rows
  const int above_hi = std::min(hi, signal_top - 2 * side);
  if (above_hi >= lo) ranges.push_back({lo, above_hi});
  const int below_lo = std::max(lo, signal_top + 2 * side);
  if (below_lo <= hi) ranges.push_back({below_lo, hi});
  if (ranges.empty())
    throw InvalidArgument("noise anchor: no background rows one patch height from the signal");
  int64_t total = 0;
  for (auto [a, b] : ranges) total += b - a + 1;
  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  int64_t k = pick(rng);
  for (auto [a, b] : ranges) {
    const int64_t len = b - a + 1;
    if (k < len) return a + static_cast<int>(k);
    k -= len;
  }
  return ranges.back().second;
}

inline MatF scale_mat(const MatF& m, float inv) {
  MatF out = m;
  for (float& x : out.v) x *= inv;
  return out;
}

}  // namespace detail

// Builds the balanced signal/noise patch set for a group of stacks: per
// stack, the 1-/3-/5-frame-average pools are each sampled at cfg.fraction,
// and every sampled frame yields 2*steps+1 signal and as many noise patches
// with co-located target patches.
//
// Normalization: the input frame and an RF-domain target (reference or
// segmented) share one scale, the max of their max-abs values. An
// exact-reconstruction target lives in the beamformed domain and is
// normalized by its own max-abs.
inline std::pair<std::vector<PatchSample>, DatasetManifest> build_patch_dataset(
    const std::vector<StackForPatches>& stacks, const PatchConfig& cfg) {
  DatasetManifest manifest;
  manifest.target_kind = cfg.target_kind;
  manifest.seed = cfg.seed;

  std::vector<PatchSample> samples;
  const std::array<int, 3> pool_ks = {1, 3, 5};

  for (const auto& entry : stacks) {
    const auto& stack = entry.stack;
    if (stack.frames.empty()) throw InvalidArgument("build_patch_dataset: empty stack");
    if (!stack.source_truth)
      throw ConfigError("build_patch_dataset: stack " + std::to_string(entry.stack_id) +
                        " has no ground truth anchor");
    const auto& g = stack.geometry();
    if (entry.target.rows != g.n_samples || entry.target.cols != g.n_elements)
      throw ConfigError("build_patch_dataset: target frame shape mismatch for stack " +
                        std::to_string(entry.stack_id));
    const int side = g.n_elements;
    manifest.patch_side = side;

    const int signal_top =
        detail::signal_anchor_row(g, *stack.source_truth, side, cfg.steps, cfg.step_size);
    Rng anchor_rng = make_rng(cfg.seed, 0xa0c0 + static_cast<uint64_t>(entry.stack_id));
    const int noise_top =
        detail::noise_anchor_row(g, signal_top, side, cfg.steps, cfg.step_size, anchor_rng);
    const int anchor_col = g.n_elements / 2;

    const float target_scale = entry.target.max_abs();
    const bool shared_scale = cfg.target_kind != TargetKind::exact_reconstruction;
    const float target_own_inv = target_scale > 0 ? 1.0f / target_scale : 0.0f;

    for (size_t pi = 0; pi < pool_ks.size(); ++pi) {
      const int k = pool_ks[pi];
      if (stack.count() < k) continue;
      const std::vector<RfFrame> pool =
          (k == 1) ? stack.frames : temporal_average(stack, k, StridePolicy::disjoint);
      const uint64_t pool_seed =
          mix_seed(cfg.seed, 0xf00d + static_cast<uint64_t>(entry.stack_id) * 8 + pi);
      const auto chosen = sample_frames(pool, cfg.fraction, pool_seed);

      for (const auto& frame : chosen) {
        const float in_scale = frame.samples.max_abs();
        if (in_scale == 0.0f && !shared_scale)
          throw DegenerateInput("build_patch_dataset: all-zero input frame");
        const float pair_scale = shared_scale ? std::max(in_scale, target_scale) : in_scale;
        if (pair_scale == 0.0f)
          throw DegenerateInput("build_patch_dataset: all-zero frame pair");
        const MatF norm_in = detail::scale_mat(frame.samples, 1.0f / pair_scale);
        const MatF norm_target = detail::scale_mat(
            entry.target, shared_scale ? 1.0f / pair_scale : target_own_inv);

        auto& bucket = manifest.per_frames_averaged[k];
        bucket.frame_samples += 1;
        for (int which = 0; which < 2; ++which) {
          const PatchKind kind = which == 0 ? PatchKind::signal : PatchKind::noise;
          const int top = which == 0 ? signal_top : noise_top;
          auto ins = extract_moving_window(norm_in, top, anchor_col, cfg.steps, cfg.step_size);
          auto tgs =
              extract_moving_window(norm_target, top, anchor_col, cfg.steps, cfg.step_size);
          for (size_t w = 0; w < ins.size(); ++w) {
            PatchSample s;
            s.input = std::move(ins[w]);
            s.target = std::move(tgs[w]);
            s.kind = kind;
            s.target_kind = cfg.target_kind;
            s.frames_averaged = k;
            s.origin = PatchOrigin{entry.stack_id,
                                   top + (static_cast<int>(w) - cfg.steps) * cfg.step_size,
                                   static_cast<int>(w)};
            samples.push_back(std::move(s));
            if (kind == PatchKind::signal)
              bucket.signal_patches += 1;
            else
              bucket.noise_patches += 1;
          }
        }
      }
    }
  }
  manifest.patch_count = static_cast<int64_t>(samples.size());
  manifest.validate_balance();
  return {std::move(samples), manifest};
}

// ---------------------------------------------------------------------------
// Acquisition-level splitting (never by frame or patch)

template <typename T>
std::array<std::vector<T>, 3> split_acquisitions(const std::vector<T>& items,
                                                 std::array<double, 3> ratios, uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("split_acquisitions: ratios must sum to 1");
  int classes = 0;
  for (double r : ratios) classes += (r > 0);
  if (static_cast<int>(items.size()) < classes)
    throw InvalidArgument("split_acquisitions: fewer stacks than split classes");

  const int n = static_cast<int>(items.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x59117);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }

  // Largest-remainder apportionment of n over the ratios.
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int c = 0; c < 3; ++c) {
    const double want = ratios[c] * n;
    counts[c] = static_cast<int>(std::floor(want));
    frac[c] = want - counts[c];
    assigned += counts[c];
  }
  while (assigned < n) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (frac[c] > frac[best]) best = c;
    counts[best] += 1;
    frac[best] = -1;
    ++assigned;
  }

  std::array<std::vector<T>, 3> out;
  int cursor = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < counts[c]; ++i) out[c].push_back(items[order[cursor++]]);
  return out;
}

// ---------------------------------------------------------------------------
// Duplicate-acquisition removal (exact content hash)

inline uint64_t stack_hash(const FrameStack& stack) {
  uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& f : stack.frames)
    feed(f.samples.v.data(), f.samples.v.size() * sizeof(float));
  return h;
}

template <typename T, typename HashFn>
std::vector<T> dedup_by_hash(std::vector<T> items, HashFn&& hash) {
  std::vector<uint64_t> seen;
  std::vector<T> out;
  for (auto& it : items) {
    const uint64_t h = hash(it);
    if (std::find(seen.begin(), seen.end(), h) != seen.end()) continue;
    seen.push_back(h);
    out.push_back(std::move(it));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: manifest (key = value) + patches.bin
//   u32 count | u32 side | per sample: side*side f32 input, side*side f32 target

inline void write_patch_dataset(const std::filesystem::path& dir,
                                const std::vector<PatchSample>& samples,
                                const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir);
  {
    KeyValueMap kv;
    kv["target_kind"] = to_string(manifest.target_kind);
    kv["split"] = to_string(manifest.split);
    kv["seed"] = std::to_string(manifest.seed);
    kv["patch_side"] = std::to_string(manifest.patch_side);
    kv["patch_count"] = std::to_string(manifest.patch_count);
    for (const auto& [k, c] : manifest.per_frames_averaged) {
      const std::string p = "fa_" + std::to_string(k) + ".";
      kv[p + "frame_samples"] = std::to_string(c.frame_samples);
      kv[p + "signal_patches"] = std::to_string(c.signal_patches);
      kv[p + "noise_patches"] = std::to_string(c.noise_patches);
    }
    write_keyvalues(dir / "manifest", kv);
  }
  std::ofstream os(dir / "patches.bin", std::ios::binary);
  if (!os) throw IoError("dataset: cannot write " + (dir / "patches.bin").string());
  const uint32_t count = static_cast<uint32_t>(samples.size());
  const uint32_t side = static_cast<uint32_t>(manifest.patch_side);
  os.write(reinterpret_cast<const char*>(&count), 4);
  os.write(reinterpret_cast<const char*>(&side), 4);
  for (const auto& s : samples) {
    os.write(reinterpret_cast<const char*>(s.input.v.data()),
             static_cast<std::streamsize>(s.input.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(s.target.v.data()),
             static_cast<std::streamsize>(s.target.size() * sizeof(float)));
  }
  if (!os) throw IoError("dataset: write failed in " + dir.string());
}

// Reload gives input/target pairs plus manifest-level metadata; per-sample
// kind/origin are not part of the on-disk format.
inline std::pair<std::vector<PatchSample>, DatasetManifest> read_patch_dataset(
    const std::filesystem::path& dir) {
  DatasetManifest manifest;
  {
    const auto kv = read_keyvalues(dir / "manifest");
    auto need = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw IoError("dataset manifest: missing key " + k);
      return it->second;
    };
    manifest.target_kind = target_kind_from_string(need("target_kind"));
    const std::string split = need("split");
    manifest.split = split == "train"  ? SplitKind::train
                     : split == "val" ? SplitKind::val
                                      : SplitKind::test;
    manifest.seed = std::stoull(need("seed"));
    manifest.patch_side = std::stoi(need("patch_side"));
    manifest.patch_count = std::stoll(need("patch_count"));
    for (const auto& [k, v] : kv) {
      if (k.rfind("fa_", 0) != 0) continue;
      const auto dot = k.find('.');
      const int fa = std::stoi(k.substr(3, dot - 3));
      const std::string field = k.substr(dot + 1);
      auto& bucket = manifest.per_frames_averaged[fa];
      if (field == "frame_samples") bucket.frame_samples = std::stoll(v);
      if (field == "signal_patches") bucket.signal_patches = std::stoll(v);
      if (field == "noise_patches") bucket.noise_patches = std::stoll(v);
    }
  }
  std::ifstream is(dir / "patches.bin", std::ios::binary);
  if (!is) throw IoError("dataset: cannot open " + (dir / "patches.bin").string());
  uint32_t count = 0, side = 0;
  if (!is.read(reinterpret_cast<char*>(&count), 4) ||
      !is.read(reinterpret_cast<char*>(&side), 4))
    throw IoError("dataset: truncated patches.bin header");
  std::vector<PatchSample> samples(count);
  for (auto& s : samples) {
    s.input = MatF(static_cast<int>(side), static_cast<int>(side));
    s.target = MatF(static_cast<int>(side), static_cast<int>(side));
    s.target_kind = manifest.target_kind;
    if (!is.read(reinterpret_cast<char*>(s.input.v.data()),
                 static_cast<std::streamsize>(s.input.size() * sizeof(float))) ||
        !is.read(reinterpret_cast<char*>(s.target.v.data()),
                 static_cast<std::streamsize>(s.target.size() * sizeof(float))))
      throw IoError("dataset: truncated patches.bin data");
  }
  return {std::move(samples), manifest};
}

}  // namespace pagan

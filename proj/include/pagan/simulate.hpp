#pragma once

#include <cmath>
#include <random>

#include "pagan/errors.hpp"
#include "pagan/rf.hpp"
#include "pagan/rng.hpp"

namespace pagan {

// A single photoacoustic point source. elevation_m models an out-of-plane
// source: it lengthens every propagation path and flattens the parabola.
struct SourceSpec {
  double lateral_m = 0.0;
  double axial_m = 0.05;
  double pulse_width_s = 1.0e-7;  // Gaussian sigma of the emitted pulse
  double amplitude = 1.0;
  double spot_sigma_m = 0.3e-3;  // physical source extent
  double elevation_m = 0.0;

  void validate() const {
    if (!(axial_m > 0)) throw InvalidArgument("source: axial_pos must be > 0");
    if (!(pulse_width_s > 0)) throw InvalidArgument("source: pulse_width must be > 0");
    if (!(amplitude > 0)) throw InvalidArgument("source: amplitude must be > 0");
    if (spot_sigma_m < 0) throw InvalidArgument("source: spot_sigma must be >= 0");
  }
};

// Stand-in for the DAQ noise the reference pipeline is built to remove:
// white noise per frame, a per-element DC band shared by all frames of one
// stack, and isolated temporal spikes. All stds are relative to the clean
// frame's peak amplitude.
struct NoiseSpec {
  double white_noise_std = 0.5;
  double channel_offset_std = 0.1;
  double spike_rate = 0.002;  // probability per element column, per frame
  uint64_t seed = 1;

  void validate() const {
    if (white_noise_std < 0 || channel_offset_std < 0)
      throw InvalidArgument("noise: stds must be >= 0");
    if (spike_rate < 0 || spike_rate > 1)
      throw InvalidArgument("noise: spike_rate must be in [0, 1]");
  }
};

// Relative amplitude of the rarefaction (trailing) lobe of the synthetic
// pulse; below 1 so the coherent DAS maximum is unique.
inline constexpr double kTrailingLobeGain = 0.65;

namespace detail {

inline double source_distance(const AcquisitionGeometry& g, const SourceSpec& s, int element) {
  const double dx = g.element_x(element) - s.lateral_m;
  return std::sqrt(dx * dx + s.axial_m * s.axial_m + s.elevation_m * s.elevation_m);
}

// Effective temporal sigma in samples: pulse width plus the blur of the
// finite spot size.
inline double pulse_sigma_samples(const AcquisitionGeometry& g, const SourceSpec& s) {
  const double c = g.speed_of_sound_mps;
  const double sigma_t =
      std::sqrt(s.pulse_width_s * s.pulse_width_s + (s.spot_sigma_m / c) * (s.spot_sigma_m / c));
  return sigma_t * g.sample_rate_hz;
}

}  // namespace detail

// Sample index where the wavefront from `source` reaches `element`.
inline int arrival_sample(const AcquisitionGeometry& g, const SourceSpec& s, int element) {
  const double t = detail::source_distance(g, s, element) / g.speed_of_sound_mps;
  const double offset_t = g.axial_offset_m / g.speed_of_sound_mps;
  return static_cast<int>(std::lround((t - offset_t) * g.sample_rate_hz));
}

// Rendered support half-width: the pulse is written within this band around
// the arrival sample and is exactly zero outside.
inline int pulse_support_samples(const AcquisitionGeometry& g, const SourceSpec& s) {
  return static_cast<int>(std::ceil(7.0 * detail::pulse_sigma_samples(g, s)));
}

// Noise-free frame: per element, a bipolar derivative-of-Gaussian pulse
// scaled by amplitude/distance and cos(theta) directivity. The positive
// extremum of the pulse sits on the time-of-flight sample, so the coherent
// delay-and-sum maximum lands on the source position.
inline RfFrame synthesize_clean(const AcquisitionGeometry& g, const SourceSpec& s) {
  g.validate();
  s.validate();

  RfFrame frame{MatF(g.n_samples, g.n_elements), g, 1};
  const double sigma = detail::pulse_sigma_samples(g, s);
  if (!(sigma > 0)) throw InvalidArgument("synthesize_clean: degenerate pulse width");
  const int support = pulse_support_samples(g, s);

  const double offset_t = g.axial_offset_m / g.speed_of_sound_mps;
  bool any_in_view = false;
  for (int e = 0; e < g.n_elements; ++e) {
    const double dist = detail::source_distance(g, s, e);
    const int center = arrival_sample(g, s, e);
    if (center < 0 || center >= g.n_samples) continue;
    any_in_view = true;
    const double cos_theta = s.axial_m / dist;
    const double amp = s.amplitude / dist * cos_theta;
    // continuous (sub-sample) anchor; `center` is its nearest sample and
    // the rendered band stays within +-support of it so ground_truth_mask
    // margins bound the nonzero region exactly
    const double center_f = (dist / g.speed_of_sound_mps - offset_t) * g.sample_rate_hz;
    const int lo = std::max(0, center - support);
    const int hi = std::min(g.n_samples - 1, center + support);
    for (int i = lo; i <= hi; ++i) {
      // -u * exp((1-u^2)/2): unit-peak derivative-of-Gaussian (N-shape),
      // shifted so u = -1 (the compression peak) falls on the arrival
      // time. The rarefaction lobe is damped, as in band-limited detected
      // PA pulses; with equal lobes the |RF| delay-and-sum maximum would be
      // ambiguous between the two extrema.
      const double u = (i - center_f) / sigma - 1.0;
      const double lobe = (u > 0.0) ? kTrailingLobeGain : 1.0;
      frame.samples.at(i, e) =
          static_cast<float>(amp * lobe * (-u) * std::exp(0.5 * (1.0 - u * u)));
    }
  }
  if (!any_in_view)
    throw OutOfView("synthesize_clean: arrival time beyond recorded window for all elements");
  return frame;
}

// n_frames noisy realizations of one spot. The channel DC offsets are drawn
// once per stack (systemic, shared across frames); white noise and spikes
// are fresh per frame. Fully deterministic given noise.seed.
inline FrameStack synthesize_stack(const AcquisitionGeometry& g, const SourceSpec& s,
                                   const NoiseSpec& noise) {
  noise.validate();
  const RfFrame clean = synthesize_clean(g, s);
  const double peak = clean.samples.max_abs();

  Rng rng = make_rng(noise.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> channel_offset(g.n_elements, 0.0);
  if (noise.channel_offset_std > 0)
    for (int e = 0; e < g.n_elements; ++e)
      channel_offset[e] = unit_normal(rng) * noise.channel_offset_std * peak;

  FrameStack stack;
  stack.frames.reserve(g.n_frames);
  stack.source_truth = SourceTruth{s.lateral_m, s.axial_m};

  const double white_std = noise.white_noise_std * peak;
  for (int f = 0; f < g.n_frames; ++f) {
    RfFrame frame = clean;
    for (int e = 0; e < g.n_elements; ++e) {
      const double dc = channel_offset[e];
      if (white_std > 0) {
        for (int i = 0; i < g.n_samples; ++i)
          frame.samples.at(i, e) +=
              static_cast<float>(dc + unit_normal(rng) * white_std);
      } else if (dc != 0.0) {
        for (int i = 0; i < g.n_samples; ++i) frame.samples.at(i, e) += static_cast<float>(dc);
      }
      if (noise.spike_rate > 0 && unit(rng) < noise.spike_rate) {
        const int row = static_cast<int>(unit(rng) * g.n_samples) % g.n_samples;
        const double mag = (5.0 + 5.0 * unit(rng)) * peak;
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        frame.samples.at(row, e) += static_cast<float>(sign * mag);
      }
    }
    stack.frames.push_back(std::move(frame));
  }
  return stack;
}

// Ground-truth segmentation: pixels within `margin_samples` of the
// theoretical arrival curve are signal, everything else background.
inline BackgroundMask ground_truth_mask(const AcquisitionGeometry& g, const SourceSpec& s,
                                        int margin_samples) {
  s.validate();
  if (margin_samples < pulse_support_samples(g, s))
    throw InvalidArgument("ground_truth_mask: margin smaller than pulse support");

  BackgroundMask out{Mat<uint8_t>(g.n_samples, g.n_elements, 1)};
  for (int e = 0; e < g.n_elements; ++e) {
    const int center = arrival_sample(g, s, e);
    const int lo = std::max(0, center - margin_samples);
    const int hi = std::min(g.n_samples - 1, center + margin_samples);
    for (int i = lo; i <= hi; ++i) out.mask.at(i, e) = 0;
  }
  out.validate();
  return out;
}

}  // namespace pagan

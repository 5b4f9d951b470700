#pragma once

#include <cmath>

#include "pagan/errors.hpp"

namespace pagan {

// Linear-array acquisition geometry. Defaults follow the 128-element /
// 2000-sample / 260-frame, 40 MHz water-immersion rig this toolkit simulates;
// speed of sound and pitch are configurable because tissue differs.
struct AcquisitionGeometry {
  int n_elements = 128;
  int n_samples = 2000;
  int n_frames = 260;
  float sample_rate_hz = 40.0e6f;
  float speed_of_sound_mps = 1480.0f;
  float element_pitch_m = 0.3e-3f;
  float axial_offset_m = 0.0f;

  void validate() const {
    if (n_elements < 2) throw InvalidArgument("geometry: n_elements must be >= 2");
    if (n_samples < 2) throw InvalidArgument("geometry: n_samples must be >= 2");
    if (n_frames < 1) throw InvalidArgument("geometry: n_frames must be >= 1");
    if (!(sample_rate_hz > 0)) throw InvalidArgument("geometry: sample_rate must be > 0");
    if (!(speed_of_sound_mps > 0)) throw InvalidArgument("geometry: speed_of_sound must be > 0");
    if (!(element_pitch_m > 0)) throw InvalidArgument("geometry: element_pitch must be > 0");
  }

  // Lateral element position, array centered on x = 0.
  double element_x(int e) const {
    return (e - 0.5 * (n_elements - 1)) * static_cast<double>(element_pitch_m);
  }

  // One-way axial spacing of the sample/pixel grid (PA sources emit, so
  // there is no transmit leg and no factor of 2).
  double axial_spacing_m() const {
    return static_cast<double>(speed_of_sound_mps) / sample_rate_hz;
  }

  double depth_of_sample(int i) const { return axial_offset_m + i * axial_spacing_m(); }
  double min_depth_m() const { return depth_of_sample(0); }
  double max_depth_m() const { return depth_of_sample(n_samples - 1); }

  friend bool operator==(const AcquisitionGeometry& a, const AcquisitionGeometry& b) {
    return a.n_elements == b.n_elements && a.n_samples == b.n_samples &&
           a.n_frames == b.n_frames && a.sample_rate_hz == b.sample_rate_hz &&
           a.speed_of_sound_mps == b.speed_of_sound_mps &&
           a.element_pitch_m == b.element_pitch_m && a.axial_offset_m == b.axial_offset_m;
  }
};

}  // namespace pagan

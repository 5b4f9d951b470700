#pragma once

#include <cmath>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/rf.hpp"
#include "pagan/threading.hpp"

namespace pagan {

// Delay-and-sum output on the same (n_samples x n_elements) grid as the RF
// input. Axial pixel spacing is one-way (c / fs): PA sources emit, there is
// no transmit leg.
struct DasImage {
  MatD pixels;
  AcquisitionGeometry geometry;

  double axial_spacing_m() const { return geometry.axial_spacing_m(); }
  double lateral_spacing_m() const { return geometry.element_pitch_m; }
};

struct PointTarget {
  int row = 0;
  int col = 0;
  double sigma_m = 0.3e-3;
};

// Plain DAS, no apodization. For pixel (i, j), sums samples[tau, e] over the
// aperture centered on column j, where tau is the one-way delay in samples
// rounded to nearest (or linearly interpolated with interpolate = true).
// Out-of-range delays contribute zero. aperture = 0 means all elements.
inline DasImage das_reconstruct(const RfFrame& frame, int aperture = 0,
                                bool interpolate = false) {
  const auto& g = frame.geometry;
  if (aperture < 0 || aperture > g.n_elements)
    throw InvalidArgument("das_reconstruct: aperture must be in [0, n_elements]");
  const int half = (aperture == 0) ? g.n_elements : aperture / 2;

  const int rows = g.n_samples, cols = g.n_elements;
  const double c = g.speed_of_sound_mps;
  const double fs = g.sample_rate_hz;
  const double offset_t = g.axial_offset_m / c;

  // Delay table over (depth row, element-column offset): distance depends
  // only on |x_j - x_e| and z_i.
  const int ndj = 2 * cols - 1;
  std::vector<double> delay(static_cast<size_t>(rows) * ndj);
  for (int i = 0; i < rows; ++i) {
    const double z = g.depth_of_sample(i);
    for (int dj = 0; dj < ndj; ++dj) {
      const double lat = (dj - (cols - 1)) * static_cast<double>(g.element_pitch_m);
      const double dist = std::sqrt(lat * lat + z * z);
      delay[static_cast<size_t>(i) * ndj + dj] = (dist / c - offset_t) * fs;
    }
  }

  DasImage image{MatD(rows, cols), g};
  parallel_for(0, rows, [&](int i) {
    const double* drow = delay.data() + static_cast<size_t>(i) * ndj;
    for (int j = 0; j < cols; ++j) {
      const int e0 = std::max(0, j - half);
      const int e1 = std::min(cols - 1, j + half);
      double acc = 0.0;
      for (int e = e0; e <= e1; ++e) {
        const double tau = drow[j - e + cols - 1];
        if (interpolate) {
          const int lo = static_cast<int>(std::floor(tau));
          if (lo >= 0 && lo + 1 < rows) {
            const double w = tau - lo;
            acc += (1.0 - w) * frame.samples.at(lo, e) + w * frame.samples.at(lo + 1, e);
          }
        } else {
          const int idx = static_cast<int>(std::lround(tau));
          if (idx >= 0 && idx < rows) acc += frame.samples.at(idx, e);
        }
      }
      image.pixels.at(i, j) = acc;
    }
  });
  return image;
}

// Multiply by a 2-D Gaussian centered on `peak`, distances measured in
// meters on the pixel grid. Isolates the point source on an empty
// background (the exact-reconstruction target X_De).
inline DasImage exact_target(const DasImage& image, const PointTarget& peak) {
  if (peak.row < 0 || peak.row >= image.pixels.rows || peak.col < 0 ||
      peak.col >= image.pixels.cols)
    throw InvalidArgument("exact_target: peak out of bounds");
  if (!(peak.sigma_m > 0)) throw InvalidArgument("exact_target: sigma must be > 0");

  const double dz = image.axial_spacing_m();
  const double dx = image.lateral_spacing_m();
  const double inv2s2 = 1.0 / (2.0 * peak.sigma_m * peak.sigma_m);

  DasImage out = image;
  for (int i = 0; i < image.pixels.rows; ++i) {
    const double da = (i - peak.row) * dz;
    for (int j = 0; j < image.pixels.cols; ++j) {
      const double dl = (j - peak.col) * dx;
      const double gain = std::exp(-(da * da + dl * dl) * inv2s2);
      out.pixels.at(i, j) = image.pixels.at(i, j) * gain;
    }
  }
  return out;
}

// Argmax of |pixels|; ties resolve to the smallest row, then column. DAS
// output is bipolar RF, so the envelope magnitude is what localizes.
inline PointTarget locate_peak(const DasImage& image) {
  double best = -1.0;
  PointTarget peak;
  for (int i = 0; i < image.pixels.rows; ++i)
    for (int j = 0; j < image.pixels.cols; ++j) {
      const double mag = std::abs(image.pixels.at(i, j));
      if (mag > best) {
        best = mag;
        peak.row = i;
        peak.col = j;
      }
    }
  if (best <= 0.0) throw DegenerateInput("locate_peak: all-zero image");
  return peak;
}

// Pixel position of a metric ground truth on the DAS grid.
inline std::pair<double, double> truth_to_pixel(const AcquisitionGeometry& g, double axial_m,
                                                double lateral_m) {
  const double row = (axial_m - g.axial_offset_m) / g.axial_spacing_m();
  const double col = lateral_m / g.element_pitch_m + 0.5 * (g.n_elements - 1);
  return {row, col};
}

}  // namespace pagan

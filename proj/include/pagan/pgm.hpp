#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/mat.hpp"

namespace pagan {

// 8-bit binary PGM (P5) after max-abs normalization: [-1, 1] -> [0, 255]
// with zero mapping to mid-gray.
inline void write_pgm(const std::filesystem::path& path, const MatF& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("PGM: cannot open for writing: " + path.string());
  const float scale = image.max_abs();
  const float inv = scale > 0 ? 1.0f / scale : 0.0f;
  os << "P5\n" << image.cols << " " << image.rows << "\n255\n";
  std::vector<uint8_t> row(image.cols);
  for (int i = 0; i < image.rows; ++i) {
    for (int j = 0; j < image.cols; ++j) {
      const float v = image.at(i, j) * inv;  // [-1, 1]
      row[j] = static_cast<uint8_t>(std::lround((v + 1.0f) * 127.5f));
    }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!os) throw IoError("PGM: write failed: " + path.string());
}

inline Mat<uint8_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("PGM: cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) throw IoError("PGM: unsupported format: " + path.string());
  is.get();  // single whitespace after header
  Mat<uint8_t> out(h, w);
  if (!is.read(reinterpret_cast<char*>(out.v.data()), static_cast<std::streamsize>(out.size())))
    throw IoError("PGM: truncated data: " + path.string());
  return out;
}

// Side-by-side panel strip with a thin white separator, each panel
// normalized independently (figure layout used by evaluate).
inline MatF hstack_panels(const std::vector<MatF>& panels, int sep = 2) {
  if (panels.empty()) throw InvalidArgument("hstack_panels: no panels");
  const int rows = panels.front().rows;
  int cols = 0;
  for (const auto& p : panels) {
    if (p.rows != rows) throw InvalidArgument("hstack_panels: row mismatch");
    cols += p.cols;
  }
  cols += sep * (static_cast<int>(panels.size()) - 1);
  MatF out(rows, cols, 0.0f);
  int x = 0;
  for (size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    const float inv = p.max_abs() > 0 ? 1.0f / p.max_abs() : 0.0f;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols; ++j) out.at(i, x + j) = p.at(i, j) * inv;
    x += p.cols;
    if (k + 1 < panels.size())
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < sep; ++j) out.at(i, x + j) = 1.0f;
    x += (k + 1 < panels.size()) ? sep : 0;
  }
  return out;
}

}  // namespace pagan

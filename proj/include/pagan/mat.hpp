#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pagan/errors.hpp"

namespace pagan {

// Dense row-major 2-D array. Frames, masks and images are all Mat<T>;
// rows index time samples, cols index transducer elements.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c, T fill = T{}) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw InvalidArgument("Mat: negative dimensions");
  }

  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  T* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const T* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  T max_abs() const {
    T m = T{};
    for (T x : v) m = std::max(m, static_cast<T>(std::abs(static_cast<double>(x))));
    return m;
  }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
  }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

template <typename To, typename From>
Mat<To> mat_cast(const Mat<From>& m) {
  Mat<To> out(m.rows, m.cols);
  for (size_t i = 0; i < m.size(); ++i) out.v[i] = static_cast<To>(m.v[i]);
  return out;
}

}  // namespace pagan

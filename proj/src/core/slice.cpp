#include "lss/core/slice.hpp"

#include <algorithm>
#include <cmath>

namespace lss {

PathologyLabels derive_labels(const LabelImage& seg) {
  return {(seg == kGgo).any(), (seg == kCons).any()};
}

void validate(const LongitudinalSlicePair& pair) {
  if (pair.reference.rows() != pair.target.rows() || pair.reference.cols() != pair.target.cols())
    throw InputError("slice pair: reference and target shapes differ");
  if (pair.ref_time >= pair.tar_time) throw InputError("slice pair: ref_time must precede tar_time");
  if (pair.target_seg &&
      (pair.target_seg->rows() != pair.target.rows() || pair.target_seg->cols() != pair.target.cols()))
    throw InputError("slice pair: target_seg shape differs from target");
}

namespace {

// Source coordinate of a destination pixel centre.
inline double source_coord(int dst, int in_size, int out_size) {
  return (dst + 0.5) * double(in_size) / double(out_size) - 0.5;
}

}  // namespace

Image2D resize_bilinear(const Image2D& in, int rows, int cols) {
  if (rows == in.rows() && cols == in.cols()) return in;
  Image2D out(rows, cols);
  const int h = int(in.rows()), w = int(in.cols());
  for (int r = 0; r < rows; ++r) {
    const double sy = std::clamp(source_coord(r, h, rows), 0.0, double(h - 1));
    const int y0 = int(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (int c = 0; c < cols; ++c) {
      const double sx = std::clamp(source_coord(c, w, cols), 0.0, double(w - 1));
      const int x0 = int(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      const double top = (1 - fx) * in(y0, x0) + fx * in(y0, x1);
      const double bot = (1 - fx) * in(y1, x0) + fx * in(y1, x1);
      out(r, c) = float((1 - fy) * top + fy * bot);
    }
  }
  return out;
}

LabelImage resize_nearest(const LabelImage& in, int rows, int cols) {
  if (rows == in.rows() && cols == in.cols()) return in;
  LabelImage out(rows, cols);
  const int h = int(in.rows()), w = int(in.cols());
  for (int r = 0; r < rows; ++r) {
    const int y = std::clamp(int(std::floor((r + 0.5) * h / rows)), 0, h - 1);
    for (int c = 0; c < cols; ++c) {
      const int x = std::clamp(int(std::floor((c + 0.5) * w / cols)), 0, w - 1);
      out(r, c) = in(y, x);
    }
  }
  return out;
}

}  // namespace lss

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "lss/core/volume.hpp"

namespace lss {

/// Row-major 2-D image, indexed (row, col).
template <typename T>
using Image = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image2D = Image<float>;
using LabelImage = Image<std::uint8_t>;

struct PathologyLabels {
  bool ggo_present = false;
  bool cons_present = false;
  bool operator==(const PathologyLabels&) const = default;
};

/// ggo_present iff label 2 occurs, cons_present iff label 3 occurs.
PathologyLabels derive_labels(const LabelImage& seg);

/// Registered (reference, target) slices; the network input is [reference, target].
struct LongitudinalSlicePair {
  Image2D reference;
  Image2D target;
  std::optional<LabelImage> target_seg;
  std::optional<PathologyLabels> target_labels;
  std::optional<LabelImage> target_lung;
  std::string patient_id;
  int slice_index = 0;
  int ref_time = 0;
  int tar_time = 1;
};

/// Throws InputError when shapes differ or ref_time >= tar_time.
void validate(const LongitudinalSlicePair& pair);

template <typename T>
Image<T> axial_slice(const Volume<T>& v, int z) {
  if (z < 0 || z >= v.shape().z) throw InputError("axial_slice: z out of range");
  Image<T> out(v.shape().y, v.shape().x);
  const T* src = v.data() + v.index(z, 0, 0);
  std::copy(src, src + out.size(), out.data());
  return out;
}

/// Resampling on pixel centres (half-pixel convention), edge-clamped.
Image2D resize_bilinear(const Image2D& in, int rows, int cols);
LabelImage resize_nearest(const LabelImage& in, int rows, int cols);

}  // namespace lss

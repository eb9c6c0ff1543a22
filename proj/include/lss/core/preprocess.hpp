#pragma once

#include <optional>
#include <utility>

#include "lss/core/volume.hpp"

namespace lss {

/// Half-open voxel box [begin, end) per axis.
struct CropBox {
  int z0 = 0, y0 = 0, x0 = 0;
  int z1 = 0, y1 = 0, x1 = 0;

  Shape3 shape() const { return {z1 - z0, y1 - y0, x1 - x0}; }
  bool operator==(const CropBox&) const = default;
};

/// Tight box around nonzero voxels. Throws "empty lung mask" when none.
CropBox bounding_box(const Volume<std::uint8_t>& mask);

/// Smallest box containing both.
CropBox union_box(const CropBox& a, const CropBox& b);

/// Grow by `margin` voxels on every side, clamped to `bounds`.
CropBox expand(const CropBox& box, int margin, const Shape3& bounds);

template <typename T>
Volume<T> crop(const Volume<T>& v, const CropBox& box) {
  if (box.z0 < 0 || box.y0 < 0 || box.x0 < 0 || box.z1 > v.shape().z ||
      box.y1 > v.shape().y || box.x1 > v.shape().x || box.z1 <= box.z0 ||
      box.y1 <= box.y0 || box.x1 <= box.x0)
    throw InputError("crop box outside volume bounds");
  Volume<T> out(box.shape(), v.spacing());
  out.unit = v.unit;
  for (int z = box.z0; z < box.z1; ++z)
    for (int y = box.y0; y < box.y1; ++y)
      for (int x = box.x0; x < box.x1; ++x)
        out(z - box.z0, y - box.y0, x - box.x0) = v(z, y, x);
  return out;
}

/// Inverse of crop: place `v` at `box` inside a zero volume of `full`.
template <typename T>
Volume<T> paste(const Volume<T>& v, const CropBox& box, const Shape3& full) {
  if (!(v.shape() == box.shape())) throw InputError("paste: volume shape differs from box");
  Volume<T> out(full, v.spacing());
  out.unit = v.unit;
  for (int z = 0; z < v.shape().z; ++z)
    for (int y = 0; y < v.shape().y; ++y)
      for (int x = 0; x < v.shape().x; ++x) out(z + box.z0, y + box.y0, x + box.x0) = v(z, y, x);
  return out;
}

struct CropResult {
  Volume3D volume;
  CropBox box;
};

inline constexpr int kDefaultCropMargin = 2;

/// Crop to the lung bounding box grown by `margin_vox`.
CropResult crop_to_lung(const Volume3D& volume, const BinaryMask3D& lung_mask,
                        int margin_vox = kDefaultCropMargin);

using ClipRange = std::pair<float, float>;
inline constexpr ClipRange kDefaultHuClip{-1024.0f, 600.0f};

/// Clip (optional) then map min -> 0, max -> 1.
Volume3D min_max_normalize(const Volume3D& volume, std::optional<ClipRange> clip = kDefaultHuClip);

}  // namespace lss

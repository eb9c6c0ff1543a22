#include "lss/core/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lss {

CropBox bounding_box(const Volume<std::uint8_t>& mask) {
  const Shape3 s = mask.shape();
  CropBox b{s.z, s.y, s.x, -1, -1, -1};
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        if (!mask(z, y, x)) continue;
        b.z0 = std::min(b.z0, z), b.y0 = std::min(b.y0, y), b.x0 = std::min(b.x0, x);
        b.z1 = std::max(b.z1, z), b.y1 = std::max(b.y1, y), b.x1 = std::max(b.x1, x);
      }
  if (b.z1 < 0) throw InputError("empty lung mask");
  ++b.z1, ++b.y1, ++b.x1;
  return b;
}

CropBox union_box(const CropBox& a, const CropBox& b) {
  return {std::min(a.z0, b.z0), std::min(a.y0, b.y0), std::min(a.x0, b.x0),
          std::max(a.z1, b.z1), std::max(a.y1, b.y1), std::max(a.x1, b.x1)};
}

CropBox expand(const CropBox& box, int margin, const Shape3& bounds) {
  if (margin < 0) throw InputError("crop margin must be >= 0");
  return {std::max(0, box.z0 - margin),       std::max(0, box.y0 - margin),
          std::max(0, box.x0 - margin),       std::min(bounds.z, box.z1 + margin),
          std::min(bounds.y, box.y1 + margin), std::min(bounds.x, box.x1 + margin)};
}

CropResult crop_to_lung(const Volume3D& volume, const BinaryMask3D& lung_mask, int margin_vox) {
  if (!(volume.shape() == lung_mask.shape()))
    throw InputError("crop_to_lung: mask shape " + to_string(lung_mask.shape()) + " differs from volume " +
                     to_string(volume.shape()));
  const CropBox box = expand(bounding_box(lung_mask), margin_vox, volume.shape());
  return {crop(volume, box), box};
}

Volume3D min_max_normalize(const Volume3D& volume, std::optional<ClipRange> clip) {
  if (clip && !(clip->first < clip->second)) throw InputError("clip range must satisfy lo < hi");
  auto clipped = [&](float v) {
    return clip ? std::clamp(v, clip->first, clip->second) : v;
  };
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (float v : volume.voxels()) {
    const double c = clipped(v);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (!(hi > lo)) throw InputError("degenerate intensity range");
  Volume3D out = volume;
  const double scale = 1.0 / (hi - lo);
  for (auto& v : out.voxels()) v = float(std::clamp((double(clipped(v)) - lo) * scale, 0.0, 1.0));
  out.unit = IntensityUnit::normalized;
  return out;
}

}  // namespace lss

#include "lss/core/volume.hpp"

#include <cmath>

namespace lss {

std::string to_string(IntensityUnit unit) {
  return unit == IntensityUnit::hu ? "HU" : "normalized";
}

IntensityUnit intensity_unit_from_string(const std::string& s) {
  if (s == "HU") return IntensityUnit::hu;
  if (s == "normalized") return IntensityUnit::normalized;
  throw InputError("intensity_unit: expected \"HU\" or \"normalized\", got \"" + s + "\"");
}

std::string to_string(const Shape3& s) {
  return std::to_string(s.z) + "x" + std::to_string(s.y) + "x" + std::to_string(s.x);
}

void validate(const Volume3D& v) {
  const auto vox = v.voxels();
  for (std::size_t i = 0; i < vox.size(); ++i) {
    if (!std::isfinite(vox[i]))
      throw InputError("voxels: non-finite value at index " + std::to_string(i));
    if (v.unit == IntensityUnit::normalized && (vox[i] < 0.0f || vox[i] > 1.0f))
      throw InputError("voxels: normalized volume has value outside [0,1] at index " +
                       std::to_string(i));
  }
}

void validate_binary(const BinaryMask3D& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] > 1) throw InputError("voxels: binary mask value > 1 at index " + std::to_string(i));
}

void validate_labels(const SegMask3D& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] >= kNumSegClasses)
      throw InputError("labels: value " + std::to_string(int(m[i])) + " outside {0,1,2,3} at index " +
                       std::to_string(i));
}

}  // namespace lss

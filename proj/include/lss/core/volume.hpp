#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lss/core/error.hpp"

namespace lss {

/// Voxel counts in (z, y, x) order.
struct Shape3 {
  int z = 1;
  int y = 1;
  int x = 1;

  std::size_t count() const { return std::size_t(z) * std::size_t(y) * std::size_t(x); }
  bool operator==(const Shape3&) const = default;
};

/// Voxel size in millimetres, (z, y, x) order.
struct Spacing3 {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;

  bool operator==(const Spacing3&) const = default;
};

enum class IntensityUnit { hu, normalized };

std::string to_string(IntensityUnit unit);
IntensityUnit intensity_unit_from_string(const std::string& s);
std::string to_string(const Shape3& s);

/// Dense 3-D image in C order [z][y][x].
///
/// `unit` is only meaningful for float volumes; masks ignore it.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(Shape3 shape, Spacing3 spacing = {}, T fill = T{})
      : shape_(shape), spacing_(spacing), voxels_(shape.count(), fill) {
    if (shape.z < 1 || shape.y < 1 || shape.x < 1)
      throw InputError("shape: all dimensions must be >= 1, got " + to_string(shape));
    if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0))
      throw InputError("spacing: all components must be > 0");
  }

  const Shape3& shape() const { return shape_; }
  const Spacing3& spacing() const { return spacing_; }
  void set_spacing(Spacing3 s) { spacing_ = s; }

  std::size_t size() const { return voxels_.size(); }
  std::size_t index(int z, int y, int x) const {
    return (std::size_t(z) * shape_.y + y) * shape_.x + x;
  }
  T& operator()(int z, int y, int x) { return voxels_[index(z, y, x)]; }
  const T& operator()(int z, int y, int x) const { return voxels_[index(z, y, x)]; }
  T& operator[](std::size_t i) { return voxels_[i]; }
  const T& operator[](std::size_t i) const { return voxels_[i]; }

  std::span<T> voxels() { return voxels_; }
  std::span<const T> voxels() const { return voxels_; }
  T* data() { return voxels_.data(); }
  const T* data() const { return voxels_.data(); }

  bool contains(int z, int y, int x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < shape_.z && y < shape_.y && x < shape_.x;
  }

  IntensityUnit unit = IntensityUnit::hu;

  bool operator==(const Volume&) const = default;

 private:
  Shape3 shape_{};
  Spacing3 spacing_{};
  std::vector<T> voxels_;
};

using Volume3D = Volume<float>;
/// Voxels in {0, 1}.
using BinaryMask3D = Volume<std::uint8_t>;
/// Voxels in {0: background, 1: healthy lung, 2: GGO, 3: consolidation}.
using SegMask3D = Volume<std::uint8_t>;

enum SegLabel : std::uint8_t { kBackground = 0, kHealthy = 1, kGgo = 2, kCons = 3 };
inline constexpr int kNumSegClasses = 4;

/// Throws InputError naming the field if the volume breaks its invariants
/// (finite voxels; [0,1] when normalized).
void validate(const Volume3D& v);
void validate_binary(const BinaryMask3D& m);
void validate_labels(const SegMask3D& m);

}  // namespace lss

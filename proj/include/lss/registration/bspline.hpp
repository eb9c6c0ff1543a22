#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "lss/core/volume.hpp"

namespace lss {

using Vec3 = Eigen::Vector3d;  // (z, y, x)
using Coefficients = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Cubic B-spline free-form deformation over a voxel domain.
///
/// Control point (iz, iy, ix) sits at voxel position ((iz-1) sz, (iy-1) sy,
/// (ix-1) sx), so the grid carries one control point of padding before the
/// domain origin and at least two after its end. Displacements are in voxels,
/// components ordered (z, y, x).
struct BSplineTransform {
  Shape3 grid;
  Vec3 spacing = Vec3::Constant(8.0);
  Shape3 domain;
  Coefficients coefficients;

  /// Zero displacement on `domain` with the given control spacing.
  static BSplineTransform identity(const Shape3& domain, const Vec3& spacing);

  std::size_t control_index(int iz, int iy, int ix) const {
    return (std::size_t(iz) * grid.y + iy) * grid.x + ix;
  }
  /// Axes of extent 1 carry no displacement (2-D mode).
  std::array<bool, 3> active_axes() const { return {domain.z > 1, domain.y > 1, domain.x > 1}; }
};

/// Control points needed along one axis.
int control_count(int domain_extent, double spacing);

/// Cubic B-spline basis B0..B3 at local parameter u in [0, 1).
std::array<double, 4> bspline_basis(double u);
std::array<double, 4> bspline_basis_derivative(double u);

/// Displacement at an arbitrary point inside the domain. Throws outside.
Vec3 displacement_at(const BSplineTransform& t, const Vec3& point);

/// Per-voxel displacement vectors.
using DisplacementField = Volume<Vec3>;

DisplacementField dense_field(const BSplineTransform& t);

/// Adjoint of dense_field: sum over voxels of w(p) * B_k(p) for each control point.
Coefficients accumulate_to_grid(const BSplineTransform& t, const DisplacementField& w);

enum class Interpolation { linear, nearest };

/// Backward warp: out(p) = in(p + u(p)); samples outside the input take 0.
Volume3D apply_transform(const Volume3D& in, const BSplineTransform& t,
                         Interpolation interp = Interpolation::linear);
/// Label images must use nearest; linear throws.
Volume<std::uint8_t> apply_transform(const Volume<std::uint8_t>& in, const BSplineTransform& t,
                                     Interpolation interp = Interpolation::nearest);

Volume3D apply_field(const Volume3D& in, const DisplacementField& u, Interpolation interp);
Volume<std::uint8_t> apply_field(const Volume<std::uint8_t>& in, const DisplacementField& u);

/// Trilinear sample, clamped to the border; the derivative along a clamped axis is 0. Gradient (z, y, x)
/// of the interpolant is written to `grad` when non-null.
double sample_linear(const Volume<double>& img, const Vec3& p, Vec3* grad = nullptr);

/// Thin-plate bending energy sampled at the control knots (mean over knots).
/// Gradient w.r.t. coefficients is written to `grad` when non-null.
double bending_energy(const BSplineTransform& t, Coefficients* grad = nullptr);

}  // namespace lss

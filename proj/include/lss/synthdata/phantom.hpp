#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lss/core/manifest.hpp"
#include "lss/core/rng.hpp"
#include "lss/core/volume.hpp"
#include "lss/registration/bspline.hpp"

namespace lss {

struct Ellipsoid {
  Vec3 center = Vec3::Zero();  // voxels (z, y, x)
  Vec3 radii = Vec3::Ones();
};

struct IntensityBand {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Two lung ellipsoids placed relative to the volume shape.
std::array<Ellipsoid, 2> default_lungs(const Shape3& shape);

/// Synthetic longitudinal lung phantom. Intensities are given in normalized
/// units and written as HU via hu = -1024 + 1624 * n.
struct PhantomParams {
  Shape3 shape{16, 160, 160};
  Spacing3 spacing{2.0, 1.0, 1.0};
  std::array<Ellipsoid, 2> lungs = default_lungs(shape);
  double lung_intensity = 0.15;
  double background_intensity = 0.05;
  double spine_intensity = 1.0;

  IntRange ggo_count{1, 3};
  IntRange cons_count{0, 2};
  IntensityBand ggo_band{0.35, 0.55};
  IntensityBand cons_band{0.70, 0.90};
  RealRange ggo_radius{5.0, 12.0};  // in-plane voxels
  RealRange cons_radius{3.0, 7.0};

  RealRange growth{-0.25, 0.35};  // additive change of a lesion's radius scale per timepoint
  double late_onset_probability = 0.25;

  double deformation_amplitude = 3.0;  // voxels, bound on every coefficient
  double deformation_spacing = 16.0;   // control spacing of the ground-truth warp
  double noise_sigma = 0.02;
  int timepoints = 2;
  std::uint64_t seed = 0;

  /// Lungs placed relative to `shape`.
  static PhantomParams for_shape(const Shape3& shape);
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);

struct PhantomTimepoint {
  Volume3D image;      // HU
  BinaryMask3D lung;
  SegMask3D seg;
};

struct PhantomPatient {
  std::vector<PhantomTimepoint> timepoints;
  /// transforms[t] maps timepoint t onto t+1: image_{t+1} ~ apply_transform(image_t, transforms[t]).
  std::vector<BSplineTransform> transforms;
  /// pre_growth_seg[t] is timepoint t+1's anatomy with timepoint t's lesions.
  std::vector<SegMask3D> pre_growth_seg;
};

constexpr float normalized_to_hu(double n) { return float(-1024.0 + 1624.0 * n); }

/// Random smooth warp with every coefficient in [-amplitude, amplitude].
BSplineTransform random_transform(const Shape3& domain, double spacing, double amplitude, Rng& rng);

PhantomPatient generate_patient(const PhantomParams& params, Rng& rng);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  void validate() const;
};

/// Patients per split (rounded; test takes the remainder).
std::array<int, 3> split_counts(int n_patients, const SplitRatios& ratios);

struct DatasetSpec {
  PhantomParams phantom;
  int n_patients = 8;
  IntRange timepoint_range{2, 3};
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

/// Writes volumes, masks, ground-truth transforms and `manifest.json` under `out_dir`.
DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

}  // namespace lss

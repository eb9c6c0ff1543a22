#pragma once

#include <string>
#include <vector>

#include "lss/registration/bspline.hpp"

namespace lss {

struct RegistrationParams {
  int levels = 3;                  // pyramid levels, x2 downsampling each
  double control_spacing = 8.0;    // in each level's own voxels
  double step_size = 0.5;          // initial max coefficient update, voxels
  int max_iterations = 150;        // per level
  double bending_weight = 0.01;    // lambda
  double tolerance = 1e-5;         // relative loss improvement
  double smoothing_sigma = 2.0;    // Gaussian sigma applied to the masks, voxels

  void validate() const;
};

struct RegistrationResult {
  BSplineTransform transform;
  bool converged = true;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  std::string warning;
};

/// Mask-to-mask registration R_{moving -> fixed}. Inputs are never modified.
RegistrationResult register_masks(const BinaryMask3D& moving, const BinaryMask3D& fixed,
                                  const RegistrationParams& params = {});

/// Separable Gaussian blur with zero padding.
Volume<double> gaussian_smooth(const Volume<double>& in, double sigma);

/// Every second voxel (after mild smoothing) along axes longer than 1.
Volume<double> downsample(const Volume<double>& in);

/// Dyadic refinement of a transform onto a domain twice as fine; exact for
/// the interior of the coarse domain.
BSplineTransform refine(const BSplineTransform& coarse, const Shape3& fine_domain);

/// MSE between warped moving and fixed images plus bending energy.
class RegistrationObjective {
 public:
  RegistrationObjective(Volume<double> moving, Volume<double> fixed, double bending_weight);

  /// Value at `t`; gradient w.r.t. its coefficients into `grad` when non-null.
  double evaluate(const BSplineTransform& t, Coefficients* grad = nullptr) const;

  const Volume<double>& moving() const { return moving_; }
  const Volume<double>& fixed() const { return fixed_; }

 private:
  Volume<double> moving_;
  Volume<double> fixed_;
  double bending_weight_;
};

}  // namespace lss

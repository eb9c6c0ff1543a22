#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lss/core/rng.hpp"
#include "lss/core/slice.hpp"

namespace lss {

/// Square patch, top-left corner at (top, left).
struct PatchBox {
  int top = 0;
  int left = 0;
  int side = 1;

  bool overlaps(const PatchBox& o) const {
    return top < o.top + o.side && o.top < top + side && left < o.left + o.side && o.left < left + side;
  }
  bool inside(int rows, int cols) const {
    return side >= 1 && top >= 0 && left >= 0 && top + side <= rows && left + side <= cols;
  }
  bool operator==(const PatchBox&) const = default;
};

struct PatchLayout {
  std::vector<PatchBox> boxes;
  /// Swap partners for context disordering; partitions all box indices.
  std::optional<std::vector<std::pair<int, int>>> pairing;
};

/// Binary image, 1 on pixels covered by some patch.
using AugmentationMask = LabelImage;

struct LayoutConfig {
  int count_min = 16;
  int count_max = 25;
  int side_min = 8;
  int side_max = 16;
  int max_attempts = 1000;  // placement retries per patch (per pair when paired)
  /// When set, a patch's centre pixel must fall on a nonzero pixel here.
  const LabelImage* region = nullptr;

  /// Default side range [8,16] at 128 px, scaled with the smaller image side.
  static LayoutConfig for_image(int rows, int cols);
};

class LayoutInfeasible : public InputError {
 public:
  LayoutInfeasible(int requested, int achieved);
  int requested;
  int achieved;
};

/// Throws InputError when the layout breaks its invariants for this image.
void validate(const PatchLayout& layout, int rows, int cols);

PatchLayout sample_layout(Rng& rng, int rows, int cols, const LayoutConfig& cfg, bool paired);

AugmentationMask layout_mask(const PatchLayout& layout, int rows, int cols);

struct Augmented {
  Image2D image;
  AugmentationMask mask;
};

/// Zero every pixel inside the layout.
Augmented black_patches(const Image2D& slice, const PatchLayout& layout);

/// Exchange the contents of each paired box.
Augmented context_disordering(const Image2D& slice, const PatchLayout& layout);

enum class PretextTask { black, disorder };

/// One restoration training example: input [reference, augmented_target],
/// ground truth `target`, loss mask `mask`.
struct RestorationSample {
  LongitudinalSlicePair pair;  // target replaced by its augmented version
  Image2D target;              // original target
  AugmentationMask mask;
};

RestorationSample augment_pair(const LongitudinalSlicePair& pair, PretextTask task, Rng& rng,
                               const LayoutConfig& cfg);
RestorationSample augment_pair(const LongitudinalSlicePair& pair, PretextTask task, Rng& rng);

}  // namespace lss

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lss/core/manifest.hpp"
#include "lss/core/slice.hpp"
#include "lss/model/tensor.hpp"

namespace lss {

/// One registered past -> future pair produced by preprocessing. All volumes
/// share the patient's crop box and are min-max normalized.
struct CachedPair {
  std::string patient_id;
  Split split = Split::train;
  int ref_time = 0;
  int tar_time = 1;
  std::filesystem::path reference;  // registered onto the target
  std::filesystem::path target;     // untouched by registration
  std::filesystem::path target_lung;
  std::filesystem::path target_seg;  // empty when unlabelled
  std::filesystem::path transform;
  std::string source_hash;  // hash of the inputs and settings that produced this entry
  std::string warning;      // registration diagnostics
  double mask_dice_before = 0.0;
  double mask_dice_after = 0.0;
};

struct PairCache {
  std::filesystem::path root;
  std::vector<CachedPair> pairs;

  std::filesystem::path resolve(const std::filesystem::path& p) const { return root / p; }
};

inline constexpr const char* kPairCacheFile = "pairs.json";

/// `dir` is the cache directory holding pairs.json.
PairCache load_pair_cache(const std::filesystem::path& dir);
void save_pair_cache(const PairCache& cache, const std::filesystem::path& dir);

struct SliceOptions {
  int size = 128;                   // slices are resampled to size x size
  double min_lung_fraction = 0.01;  // keep slices whose target lung area exceeds this
};

/// Axial slices of every cached pair in `split`, resampled, with target
/// segmentation, pathology labels and lung mask attached.
std::vector<LongitudinalSlicePair> load_slices(const PairCache& cache, Split split, const SliceOptions& opt = {});

/// Network input for a batch: channels [reference, target] when
/// longitudinal, [target] otherwise.
nn::Tensor<float> input_batch(const std::vector<const LongitudinalSlicePair*>& batch, bool longitudinal);

}  // namespace lss

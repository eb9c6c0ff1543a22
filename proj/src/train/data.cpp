#include "lss/train/data.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "lss/core/error.hpp"
#include "lss/core/volume_io.hpp"

namespace lss {

namespace fs = std::filesystem;

PairCache load_pair_cache(const fs::path& dir) {
  const fs::path path = dir / kPairCacheFile;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string() + " (run `lss preprocess` first)");
  PairCache cache;
  cache.root = dir;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != 1) throw InputError(path.string() + ": unsupported version");
    for (const auto& e : j.at("pairs")) {
      CachedPair p;
      p.patient_id = e.at("patient").get<std::string>();
      p.split = split_from_string(e.at("split").get<std::string>());
      p.ref_time = e.at("ref_time").get<int>();
      p.tar_time = e.at("tar_time").get<int>();
      p.reference = e.at("reference").get<std::string>();
      p.target = e.at("target").get<std::string>();
      p.target_lung = e.at("target_lung").get<std::string>();
      p.target_seg = e.value("target_seg", "");
      p.transform = e.at("transform").get<std::string>();
      p.source_hash = e.at("source_hash").get<std::string>();
      p.warning = e.value("warning", "");
      p.mask_dice_before = e.value("mask_dice_before", 0.0);
      p.mask_dice_after = e.value("mask_dice_after", 0.0);
      cache.pairs.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return cache;
}

void save_pair_cache(const PairCache& cache, const fs::path& dir) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : cache.pairs)
    pairs.push_back({{"patient", p.patient_id},
                     {"split", to_string(p.split)},
                     {"ref_time", p.ref_time},
                     {"tar_time", p.tar_time},
                     {"reference", p.reference.generic_string()},
                     {"target", p.target.generic_string()},
                     {"target_lung", p.target_lung.generic_string()},
                     {"target_seg", p.target_seg.generic_string()},
                     {"transform", p.transform.generic_string()},
                     {"source_hash", p.source_hash},
                     {"warning", p.warning},
                     {"mask_dice_before", p.mask_dice_before},
                     {"mask_dice_after", p.mask_dice_after}});
  fs::create_directories(dir);
  const fs::path path = dir / kPairCacheFile;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << nlohmann::json{{"version", 1}, {"pairs", pairs}}.dump(1) << "\n";
}

std::vector<LongitudinalSlicePair> load_slices(const PairCache& cache, Split split, const SliceOptions& opt) {
  if (opt.size < 1) throw InputError("slices: size must be positive");
  std::vector<LongitudinalSlicePair> out;
  for (const auto& p : cache.pairs) {
    if (p.split != split) continue;
    const Volume3D ref = load_volume(cache.resolve(p.reference));
    const Volume3D tar = load_volume(cache.resolve(p.target));
    const auto lung = load_mask(cache.resolve(p.target_lung));
    std::optional<SegMask3D> seg;
    if (!p.target_seg.empty()) seg = load_mask(cache.resolve(p.target_seg));
    if (!(ref.shape() == tar.shape()) || !(lung.shape() == tar.shape()))
      throw InputError("slices: pair " + p.patient_id + " has inconsistent shapes");
    for (int z = 0; z < tar.shape().z; ++z) {
      const LabelImage lung_slice = axial_slice(lung, z);
      const double fraction = double((lung_slice != 0).count()) / double(lung_slice.size());
      if (fraction <= opt.min_lung_fraction) continue;
      LongitudinalSlicePair s;
      s.reference = resize_bilinear(axial_slice(ref, z), opt.size, opt.size);
      s.target = resize_bilinear(axial_slice(tar, z), opt.size, opt.size);
      s.target_lung = resize_nearest(lung_slice, opt.size, opt.size);
      if (seg) {
        s.target_seg = resize_nearest(axial_slice(*seg, z), opt.size, opt.size);
        s.target_labels = derive_labels(*s.target_seg);
      }
      s.patient_id = p.patient_id;
      s.slice_index = z;
      s.ref_time = p.ref_time;
      s.tar_time = p.tar_time;
      out.push_back(std::move(s));
    }
  }
  return out;
}

nn::Tensor<float> input_batch(const std::vector<const LongitudinalSlicePair*>& batch, bool longitudinal) {
  if (batch.empty()) throw InputError("input_batch: empty batch");
  const int h = int(batch[0]->target.rows()), w = int(batch[0]->target.cols());
  const int c = longitudinal ? 2 : 1;
  nn::Tensor<float> x(int(batch.size()), c, h, w);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = *batch[i];
    if (s.target.rows() != h || s.target.cols() != w || s.reference.rows() != h || s.reference.cols() != w)
      throw InputError("input_batch: slices differ in size");
    float* dst = x.sample(int(i));
    if (longitudinal) {
      std::copy(s.reference.data(), s.reference.data() + s.reference.size(), dst);
      dst += x.plane();
    }
    std::copy(s.target.data(), s.target.data() + s.target.size(), dst);
  }
  return x;
}

}  // namespace lss

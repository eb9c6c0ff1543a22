#include <cmath>
#include <cstdio>

#include "lss/core/volume_io.hpp"
#include "lss/registration/transform_io.hpp"
#include "lss/synthdata/phantom.hpp"

namespace lss {
namespace fs = std::filesystem;

void SplitRatios::validate() const {
  if (train < 0 || val < 0 || test < 0) throw InputError("split ratios must be >= 0");
  if (std::abs(train + val + test - 1.0) > 1e-6)
    throw InputError("split ratios must sum to 1 (got " + std::to_string(train + val + test) + ")");
}

std::array<int, 3> split_counts(int n, const SplitRatios& r) {
  r.validate();
  int n_train = int(std::lround(n * r.train));
  int n_val = int(std::lround(n * r.val));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  return {n_train, n_val, n - n_train - n_val};
}

DatasetManifest generate_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
  if (spec.n_patients < 1) throw InputError("synth: n_patients must be >= 1");
  if (spec.timepoint_range.lo < 1 || spec.timepoint_range.lo > spec.timepoint_range.hi)
    throw InputError("synth: timepoint range must satisfy 1 <= lo <= hi");
  spec.phantom.validate();
  const auto counts = split_counts(spec.n_patients, spec.ratios);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  for (int i = 0; i < spec.n_patients; ++i) {
    Rng rng(derive_seed(spec.seed, std::uint64_t(i)));
    PhantomParams params = spec.phantom;
    params.timepoints = uniform_int(rng, spec.timepoint_range.lo, spec.timepoint_range.hi);
    const PhantomPatient patient = generate_patient(params, rng);

    char id[16];
    std::snprintf(id, sizeof id, "p%03d", i);
    PatientRecord rec;
    rec.id = id;
    rec.split = i < counts[0] ? Split::train : i < counts[0] + counts[1] ? Split::val : Split::test;
    for (int t = 0; t < params.timepoints; ++t) {
      const auto& tp = patient.timepoints[std::size_t(t)];
      const std::string stem = "t" + std::to_string(t);
      const fs::path rel = fs::path(rec.id);
      Timepoint entry{t, rel / (stem + "_image.vol.json"), rel / (stem + "_lung.vol.json"),
                      rel / (stem + "_seg.vol.json")};
      save_volume(tp.image, out_dir / entry.volume);
      save_mask(tp.lung, out_dir / entry.lung_mask);
      save_mask(tp.seg, out_dir / *entry.seg_mask);
      if (t + 1 < params.timepoints)
        save_transform(patient.transforms[std::size_t(t)],
                       out_dir / rel / ("gt_t" + std::to_string(t) + "_t" + std::to_string(t + 1) + ".bspline.json"));
      rec.timepoints.push_back(std::move(entry));
    }
    manifest.patients.push_back(std::move(rec));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace lss

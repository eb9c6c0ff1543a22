#include <doctest.h>

#include <set>

#include "lss/core/hash.hpp"
#include "lss/core/volume_io.hpp"
#include "lss/synthdata/phantom.hpp"
#include "test_util.hpp"

using namespace lss;

namespace {

PhantomParams small_params() {
  PhantomParams p = PhantomParams::for_shape({6, 64, 64});
  p.deformation_spacing = 12.0;
  return p;
}

double normalized(float hu) { return (double(hu) + 1024.0) / 1624.0; }

}  // namespace

TEST_CASE("static anatomy without noise or growth repeats exactly") {
  PhantomParams p = small_params();
  p.deformation_amplitude = 0.0;
  p.growth = {0.0, 0.0};
  p.late_onset_probability = 0.0;
  p.noise_sigma = 0.0;
  p.timepoints = 2;
  Rng rng(1);
  const PhantomPatient pt = generate_patient(p, rng);
  REQUIRE(pt.timepoints.size() == 2);
  CHECK(pt.timepoints[0].image == pt.timepoints[1].image);
  CHECK(pt.timepoints[0].seg == pt.timepoints[1].seg);
  CHECK(pt.transforms.size() == 1);
}

TEST_CASE("no lesions leaves only background and healthy labels") {
  PhantomParams p = small_params();
  p.ggo_count = {0, 0};
  p.cons_count = {0, 0};
  Rng rng(2);
  const PhantomPatient pt = generate_patient(p, rng);
  for (const auto& t : pt.timepoints)
    for (auto v : t.seg.voxels()) CHECK(v <= 1);
}

TEST_CASE("generation is deterministic per seed") {
  const PhantomParams p = small_params();
  Rng a(9), b(9), c(10);
  const auto x = generate_patient(p, a), y = generate_patient(p, b), z = generate_patient(p, c);
  for (std::size_t t = 0; t < x.timepoints.size(); ++t) {
    CHECK(x.timepoints[t].image == y.timepoints[t].image);
    CHECK(x.timepoints[t].seg == y.timepoints[t].seg);
    CHECK(x.timepoints[t].lung == y.timepoints[t].lung);
  }
  CHECK(x.transforms[0].coefficients == y.transforms[0].coefficients);
  CHECK_FALSE(x.timepoints[0].image == z.timepoints[0].image);
}

TEST_CASE("labels agree with lung mask and intensities") {
  PhantomParams p = small_params();
  p.noise_sigma = 0.0;
  p.ggo_count = {2, 3};
  p.cons_count = {1, 2};
  Rng rng(4);
  const PhantomPatient pt = generate_patient(p, rng);
  for (const auto& t : pt.timepoints) {
    double sum[4] = {}, count[4] = {};
    for (std::size_t i = 0; i < t.seg.size(); ++i) {
      const int l = t.seg[i];
      REQUIRE(l <= 3);
      if (l >= 1) CHECK(t.lung[i] == 1);
      if (l == 0) CHECK(t.lung[i] == 0);
      sum[l] += normalized(t.image[i]);
      count[l] += 1;
    }
    REQUIRE(count[1] > 0);
    if (count[2] > 0) CHECK(sum[2] / count[2] > sum[1] / count[1] + 0.1);
    if (count[3] > 0 && count[2] > 0) CHECK(sum[3] / count[3] > sum[2] / count[2] + 0.1);
    if (count[3] > 0) CHECK(sum[3] / count[3] >= p.cons_band.lo - 1e-3);
  }
}

TEST_CASE("invalid parameters name the constraint") {
  PhantomParams p = small_params();
  p.ggo_band = {0.6, 0.8};
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("GGO intensity band"), InputError);
  p = small_params();
  p.deformation_amplitude = p.deformation_spacing;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("control-grid spacing / 2"), InputError);
  Rng rng(0);
  CHECK_THROWS_AS(generate_patient(p, rng), InputError);
}

TEST_CASE("split counts") {
  CHECK(split_counts(4, {0.5, 0.25, 0.25}) == std::array<int, 3>{2, 1, 1});
  CHECK(split_counts(33, {0.6, 0.15, 0.25}) == std::array<int, 3>{20, 5, 8});
  const auto d = split_counts(20, {});
  CHECK(d[0] + d[1] + d[2] == 20);
  SplitRatios bad{0.8, 0.3, 0.1};
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("dataset generation") {
  test::TempDir a, b;
  DatasetSpec spec;
  spec.phantom = small_params();
  spec.n_patients = 4;
  spec.ratios = {0.5, 0.25, 0.25};
  spec.timepoint_range = {2, 2};
  spec.seed = 17;
  const DatasetManifest m = generate_dataset(spec, a.path());
  REQUIRE(m.patients.size() == 4);
  CHECK(m.in_split(Split::train).size() == 2);
  CHECK(m.in_split(Split::val).size() == 1);
  CHECK(m.in_split(Split::test).size() == 1);
  std::set<std::string> ids;
  for (const auto& p : m.patients) {
    CHECK(ids.insert(p.id).second);
    CHECK(p.timepoints.size() == 2);
    for (const auto& t : p.timepoints) {
      CHECK(std::filesystem::exists(m.resolve(t.volume)));
      CHECK(load_volume(m.resolve(t.volume)).shape() == spec.phantom.shape);
    }
  }
  CHECK(std::filesystem::exists(a / "manifest.json"));

  generate_dataset(spec, b.path());
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    REQUIRE(std::filesystem::exists(b.path() / rel));
    CHECK(hash_file(e.path()) == hash_file(b.path() / rel));
  }
}

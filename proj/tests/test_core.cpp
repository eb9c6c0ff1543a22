#include <doctest.h>

#include <cmath>
#include <fstream>

#include "lss/core/hash.hpp"
#include "lss/core/manifest.hpp"
#include "lss/core/preprocess.hpp"
#include "lss/core/slice.hpp"
#include "lss/core/volume_io.hpp"
#include "test_util.hpp"

using namespace lss;

TEST_CASE("volume round trip keeps voxels and metadata") {
  test::TempDir dir;
  Volume3D v({4, 4, 4}, {2.0, 0.5, 0.5}, 0.0f);
  save_volume(v, dir / "zeros.vol.json");
  const Volume3D back = load_volume(dir / "zeros.vol.json");
  CHECK(back == v);
  CHECK(back.spacing() == Spacing3{2.0, 0.5, 0.5});

  Volume3D ramp({3, 5, 7}, {}, 0.0f);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = float(i) * 0.25f - 40.0f;
  save_volume(ramp, dir / "ramp.vol.json");
  CHECK(load_volume(dir / "ramp.vol.json") == ramp);

  BinaryMask3D m({2, 3, 4});
  m(1, 2, 3) = 1;
  save_mask(m, dir / "m.vol.json");
  CHECK(load_mask(dir / "m.vol.json") == m);
}

TEST_CASE("payload size must match the header shape") {
  test::TempDir dir;
  Volume3D v({2, 2, 2}, {}, 1.0f);
  save_volume(v, dir / "v.vol.json");
  {
    std::ofstream raw(raw_path_for(dir / "v.vol.json"), std::ios::binary | std::ios::trunc);
    const float seven[7] = {};
    raw.write(reinterpret_cast<const char*>(seven), sizeof seven);
  }
  CHECK_THROWS_WITH_AS(load_volume(dir / "v.vol.json"), doctest::Contains("shape/byte-count"), InputError);
}

TEST_CASE("non-finite voxels are rejected") {
  Volume3D v({2, 2, 2}, {}, 0.0f);
  v(1, 0, 1) = std::nanf("");
  CHECK_THROWS_WITH_AS(validate(v), doctest::Contains("voxels"), InputError);
  test::TempDir dir;
  CHECK_THROWS_AS(save_volume(v, dir / "nan.vol.json"), InputError);
  save_volume(Volume3D({2, 2, 2}, {}, 0.0f), dir / "nan.vol.json");
  {
    std::ofstream raw(raw_path_for(dir / "nan.vol.json"), std::ios::binary | std::ios::trunc);
    const float words[8] = {0, 0, 0, 0, 0, std::nanf(""), 0, 0};
    raw.write(reinterpret_cast<const char*>(words), sizeof words);
  }
  CHECK_THROWS_WITH_AS(load_volume(dir / "nan.vol.json"), doctest::Contains("voxels"), InputError);
}

TEST_CASE("crop to lung") {
  Volume3D v({10, 10, 10}, {}, 0.0f);
  BinaryMask3D m({10, 10, 10});
  for (int z = 3; z <= 6; ++z)
    for (int y = 3; y <= 6; ++y)
      for (int x = 3; x <= 6; ++x) m(z, y, x) = 1;
  CHECK(crop_to_lung(v, m, 0).volume.shape() == Shape3{4, 4, 4});
  const auto r = crop_to_lung(v, m, 2);
  CHECK(r.volume.shape() == Shape3{8, 8, 8});
  CHECK(r.box == CropBox{1, 1, 1, 9, 9, 9});
  CHECK_THROWS_AS(crop_to_lung(v, BinaryMask3D({10, 10, 10}), 2), InputError);

  // Margins clamp at the volume edge.
  BinaryMask3D corner({10, 10, 10});
  corner(0, 0, 0) = 1;
  CHECK(crop_to_lung(v, corner, 3).volume.shape() == Shape3{4, 4, 4});
}

TEST_CASE("min-max normalization") {
  Volume3D v({1, 1, 3});
  v[0] = -1000, v[1] = 0, v[2] = 500;
  const Volume3D n = min_max_normalize(v, std::nullopt);
  CHECK(n[0] == doctest::Approx(0.0));
  CHECK(n[1] == doctest::Approx(2.0 / 3.0));
  CHECK(n[2] == doctest::Approx(1.0));
  CHECK(n.unit == IntensityUnit::normalized);

  Volume3D w({1, 1, 4});
  w[0] = -2000, w[1] = -1024, w[2] = 600, w[3] = 900;
  const Volume3D c = min_max_normalize(w, ClipRange{-1024.0f, 600.0f});
  CHECK(c[0] == 0.0f);
  CHECK(c[1] == 0.0f);
  CHECK(c[2] == 1.0f);
  CHECK(c[3] == 1.0f);

  CHECK_THROWS_AS(min_max_normalize(Volume3D({2, 2, 2}, {}, 7.0f), std::nullopt), InputError);
}

TEST_CASE("past to future pairs") {
  CHECK(enumerate_pairs(2) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(enumerate_pairs(3) == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});
  CHECK(enumerate_pairs(1).empty());
}

TEST_CASE("manifest round trip and validation") {
  test::TempDir dir;
  DatasetManifest m;
  m.root = dir.path();
  m.patients.push_back({"a", Split::train, {{0, "a0.vol.json", "a0_lung.vol.json", std::nullopt}}});
  m.patients.push_back({"b", Split::test, {{0, "b0.vol.json", "b0_lung.vol.json", "b0_seg.vol.json"},
                                           {1, "b1.vol.json", "b1_lung.vol.json", std::nullopt}}});
  for (const auto& p : m.patients)
    for (const auto& t : p.timepoints) {
      std::ofstream(dir / t.volume.string());
      std::ofstream(dir / t.lung_mask.string());
      if (t.seg_mask) std::ofstream(dir / t.seg_mask->string());
    }
  save_manifest(m, dir / "manifest.json");
  const DatasetManifest back = load_manifest(dir / "manifest.json");
  REQUIRE(back.patients.size() == 2);
  CHECK(back.patient("b").timepoints.size() == 2);
  CHECK(back.patient("b").timepoints[0].seg_mask == std::filesystem::path("b0_seg.vol.json"));
  CHECK(back.in_split(Split::test).size() == 1);
  CHECK(enumerate_pairs(back, "b").size() == 1);
  CHECK_NOTHROW(validate(back, true));
  std::filesystem::remove(dir / "b1.vol.json");
  CHECK_THROWS_WITH_AS(validate(back, true), doctest::Contains("b1.vol.json"), InputError);
  CHECK_NOTHROW(validate(back, false));

  DatasetManifest dup = m;
  dup.patients[1].id = "a";
  CHECK_THROWS_AS(validate(dup, false), InputError);
  DatasetManifest order = m;
  order.patients[1].timepoints[1].ordinal = 0;
  CHECK_THROWS_AS(validate(order, false), InputError);
}

TEST_CASE("pathology labels follow the segmentation") {
  LabelImage seg = LabelImage::Zero(4, 4);
  CHECK(derive_labels(seg) == PathologyLabels{false, false});
  seg(1, 1) = 2;
  CHECK(derive_labels(seg) == PathologyLabels{true, false});
  seg(2, 2) = 3;
  CHECK(derive_labels(seg) == PathologyLabels{true, true});
}

TEST_CASE("resampling keeps constants and labels") {
  const Image2D flat = Image2D::Constant(20, 30, 0.3f);
  const Image2D r = resize_bilinear(flat, 8, 8);
  CHECK((r - 0.3f).abs().maxCoeff() < 1e-6f);
  LabelImage l = LabelImage::Zero(4, 4);
  l.block(0, 0, 2, 2).setConstant(3);
  const LabelImage u = resize_nearest(l, 8, 8);
  CHECK(u(0, 0) == 3);
  CHECK(u(3, 3) == 3);
  CHECK(u(4, 4) == 0);
}

TEST_CASE("content hash") {
  CHECK(hash_string("abc") == hash_string("abc"));
  CHECK(hash_string("abc") != hash_string("abd"));
  test::TempDir dir;
  std::ofstream(dir / "f.txt") << "abc";
  CHECK(hash_file(dir / "f.txt") == hash_string("abc"));
}

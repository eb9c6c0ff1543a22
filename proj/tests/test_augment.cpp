#include <doctest.h>

#include <algorithm>

#include "lss/augment/augment.hpp"

using namespace lss;

namespace {

Image2D random_slice(Rng& rng, int rows, int cols) {
  Image2D s(rows, cols);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = float(uniform_real(rng, 0, 1));
  return s;
}

LabelImage box_union(const PatchLayout& l, int rows, int cols) {
  LabelImage m = LabelImage::Zero(rows, cols);
  for (const auto& b : l.boxes)
    for (int y = b.top; y < b.top + b.side; ++y)
      for (int x = b.left; x < b.left + b.side; ++x) m(y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("layouts respect count, bounds and disjointness") {
  Rng rng(1);
  const LayoutConfig cfg = LayoutConfig::for_image(128, 128);
  CHECK(cfg.side_min == 8);
  CHECK(cfg.side_max == 16);
  for (int k = 0; k < 200; ++k) {
    const bool paired = k % 2 == 1;
    const PatchLayout l = sample_layout(rng, 128, 128, cfg, paired);
    const int n = int(l.boxes.size());
    CHECK(n >= 16);
    CHECK(n <= 25);
    for (int i = 0; i < n; ++i) {
      CHECK(l.boxes[i].inside(128, 128));
      CHECK(l.boxes[i].side >= 8);
      CHECK(l.boxes[i].side <= 16);
      for (int j = i + 1; j < n; ++j) CHECK_FALSE(l.boxes[i].overlaps(l.boxes[j]));
    }
    CHECK_NOTHROW(validate(l, 128, 128));
    if (paired) {
      REQUIRE(l.pairing);
      CHECK(n % 2 == 0);
      std::vector<int> seen(n, 0);
      for (auto [a, b] : *l.pairing) {
        CHECK(l.boxes[a].side == l.boxes[b].side);
        ++seen[a], ++seen[b];
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
  }
}

TEST_CASE("an overfull request is infeasible") {
  Rng rng(2);
  LayoutConfig cfg;
  cfg.side_min = 8;
  cfg.side_max = 16;
  try {
    sample_layout(rng, 16, 16, cfg, false);
    FAIL("expected layout infeasible");
  } catch (const LayoutInfeasible& e) {
    CHECK(std::string(e.what()).find("layout infeasible") != std::string::npos);
    CHECK(e.achieved < e.requested);
  }
}

TEST_CASE("validate catches broken layouts") {
  PatchLayout l;
  l.boxes = {{0, 0, 4}, {2, 2, 4}};
  CHECK_THROWS_AS(validate(l, 16, 16), InputError);
  l.boxes = {{14, 0, 4}};
  CHECK_THROWS_AS(validate(l, 16, 16), InputError);
}

TEST_CASE("black patches") {
  const Image2D ones = Image2D::Ones(32, 32);
  PatchLayout l;
  l.boxes = {{0, 0, 4}};
  const Augmented a = black_patches(ones, l);
  CHECK((a.image == 0.0f).count() == 16);
  CHECK(a.image.sum() == doctest::Approx(1008.0));
  CHECK(a.mask.cast<int>().sum() == 16);

  const Augmented e = black_patches(ones, PatchLayout{});
  CHECK((e.image == ones).all());
  CHECK(e.mask.cast<int>().sum() == 0);

  PatchLayout full;
  full.boxes = {{0, 0, 32}};
  const Augmented f = black_patches(ones, full);
  CHECK(f.image.abs().maxCoeff() == 0.0f);
  CHECK((f.mask == 1).all());
}

TEST_CASE("context disordering swaps paired patches") {
  Image2D s = Image2D::Constant(16, 16, 0.5f);
  s.block(0, 0, 4, 4).setConstant(0.2f);
  s.block(8, 8, 4, 4).setConstant(0.8f);
  PatchLayout l;
  l.boxes = {{0, 0, 4}, {8, 8, 4}};
  l.pairing = std::vector<std::pair<int, int>>{{0, 1}};
  const Augmented a = context_disordering(s, l);
  CHECK((a.image.block(0, 0, 4, 4) == 0.8f).all());
  CHECK((a.image.block(8, 8, 4, 4) == 0.2f).all());
  CHECK((context_disordering(a.image, l).image == s).all());

  PatchLayout unpaired;
  unpaired.boxes = l.boxes;
  CHECK_THROWS_AS(context_disordering(s, unpaired), InputError);
}

TEST_CASE("disordering preserves the pixel multiset and untouched pixels") {
  Rng rng(3);
  const LayoutConfig cfg = LayoutConfig::for_image(64, 64);
  for (int k = 0; k < 100; ++k) {
    const Image2D s = random_slice(rng, 64, 64);
    const PatchLayout l = sample_layout(rng, 64, 64, cfg, true);
    const Augmented a = context_disordering(s, l);
    std::vector<float> before(s.data(), s.data() + s.size()), after(a.image.data(), a.image.data() + a.image.size());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    CHECK(before == after);
    const LabelImage m = box_union(l, 64, 64);
    CHECK((a.mask == m).all());
    float outside = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (!m.data()[i]) outside = std::max(outside, std::abs(a.image.data()[i] - s.data()[i]));
    CHECK(outside == 0.0f);
  }
}

TEST_CASE("augment_pair touches only the target") {
  Rng rng(4);
  LongitudinalSlicePair p;
  p.reference = random_slice(rng, 128, 128);
  p.target = random_slice(rng, 128, 128);
  Rng r1(77);
  const RestorationSample a = augment_pair(p, PretextTask::black, r1);
  CHECK((a.pair.reference == p.reference).all());
  CHECK((a.target == p.target).all());
  CHECK(((a.pair.target == 0.0f) || (a.mask == 0)).all());
  CHECK((a.mask == 1).count() > 0);

  Rng d1(5), d2(5);
  const RestorationSample x = augment_pair(p, PretextTask::disorder, d1);
  const RestorationSample y = augment_pair(p, PretextTask::disorder, d2);
  CHECK((x.pair.target == y.pair.target).all());
  CHECK((x.mask == y.mask).all());
  CHECK((x.pair.reference == p.reference).all());
  CHECK_FALSE((x.pair.target == p.target).all());
}

TEST_CASE("region-restricted layouts keep patch centres on the region") {
  Rng rng(6);
  LabelImage region = LabelImage::Zero(128, 128);
  region.block(12, 8, 100, 104).setConstant(1);
  LayoutConfig cfg = LayoutConfig::for_image(128, 128);
  cfg.region = &region;
  for (int k = 0; k < 20; ++k) {
    const PatchLayout l = sample_layout(rng, 128, 128, cfg, true);
    for (const auto& b : l.boxes) CHECK(region(b.top + b.side / 2, b.left + b.side / 2) == 1);
  }
}

#include "lss/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lss {

LayoutConfig LayoutConfig::for_image(int rows, int cols) {
  LayoutConfig c;
  const double f = std::min(rows, cols) / 128.0;
  c.side_min = std::max(1, int(std::lround(8 * f)));
  c.side_max = std::max(c.side_min, int(std::lround(16 * f)));
  return c;
}

LayoutInfeasible::LayoutInfeasible(int req, int got)
    : InputError("layout infeasible: placed " + std::to_string(got) + " of " + std::to_string(req) + " patches"),
      requested(req),
      achieved(got) {}

void validate(const PatchLayout& layout, int rows, int cols) {
  const auto& b = layout.boxes;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b[i].inside(rows, cols)) throw InputError("layout: box " + std::to_string(i) + " not inside the image");
    for (std::size_t j = i + 1; j < b.size(); ++j)
      if (b[i].overlaps(b[j]))
        throw InputError("layout: boxes " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  }
  if (!layout.pairing) return;
  std::vector<int> seen(b.size(), 0);
  for (const auto& [i, j] : *layout.pairing) {
    if (i < 0 || j < 0 || i >= int(b.size()) || j >= int(b.size()) || i == j)
      throw InputError("layout: pairing index out of range");
    ++seen[std::size_t(i)], ++seen[std::size_t(j)];
    if (b[std::size_t(i)].side != b[std::size_t(j)].side) throw InputError("layout: paired boxes differ in size");
  }
  if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
    throw InputError("layout: pairing does not partition the boxes");
}

PatchLayout sample_layout(Rng& rng, int rows, int cols, const LayoutConfig& cfg, bool paired) {
  if (cfg.count_min < 1 || cfg.count_min > cfg.count_max) throw InputError("layout: bad count range");
  if (cfg.side_min < 1 || cfg.side_min > cfg.side_max) throw InputError("layout: bad side range");
  int count = uniform_int(rng, cfg.count_min, cfg.count_max);
  if (paired) count = std::max(2, count - count % 2);

  PatchLayout layout;
  auto fits = [&](const PatchBox& box) {
    if (!box.inside(rows, cols)) return false;
    if (cfg.region && !(*cfg.region)(box.top + box.side / 2, box.left + box.side / 2)) return false;
    return std::none_of(layout.boxes.begin(), layout.boxes.end(), [&](const PatchBox& o) { return o.overlaps(box); });
  };
  auto place = [&](int side) -> std::optional<PatchBox> {
    if (side > rows || side > cols) return std::nullopt;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      const PatchBox box{uniform_int(rng, 0, rows - side), uniform_int(rng, 0, cols - side), side};
      if (fits(box)) return box;
    }
    return std::nullopt;
  };

  if (!paired) {
    for (int i = 0; i < count; ++i) {
      const auto box = place(uniform_int(rng, cfg.side_min, cfg.side_max));
      if (!box) throw LayoutInfeasible(count, int(layout.boxes.size()));
      layout.boxes.push_back(*box);
    }
    return layout;
  }

  layout.pairing.emplace();
  for (int i = 0; i < count / 2; ++i) {
    const int side = uniform_int(rng, cfg.side_min, cfg.side_max);
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const auto a = place(side);
      if (!a) break;
      layout.boxes.push_back(*a);
      if (const auto b = place(side)) {
        layout.boxes.push_back(*b);
        const int n = int(layout.boxes.size());
        layout.pairing->emplace_back(n - 2, n - 1);
        placed = true;
      } else {
        layout.boxes.pop_back();
      }
    }
    if (!placed) throw LayoutInfeasible(count, int(layout.boxes.size()));
  }
  return layout;
}

AugmentationMask layout_mask(const PatchLayout& layout, int rows, int cols) {
  AugmentationMask m = AugmentationMask::Zero(rows, cols);
  for (const auto& b : layout.boxes) m.block(b.top, b.left, b.side, b.side).setOnes();
  return m;
}

Augmented black_patches(const Image2D& slice, const PatchLayout& layout) {
  const int rows = int(slice.rows()), cols = int(slice.cols());
  validate(layout, rows, cols);
  Augmented out{slice, layout_mask(layout, rows, cols)};
  for (const auto& b : layout.boxes) out.image.block(b.top, b.left, b.side, b.side).setZero();
  return out;
}

Augmented context_disordering(const Image2D& slice, const PatchLayout& layout) {
  if (!layout.pairing) throw InputError("context disordering requires a paired layout");
  const int rows = int(slice.rows()), cols = int(slice.cols());
  validate(layout, rows, cols);
  Augmented out{slice, layout_mask(layout, rows, cols)};
  for (const auto& [i, j] : *layout.pairing) {
    const PatchBox& a = layout.boxes[std::size_t(i)];
    const PatchBox& b = layout.boxes[std::size_t(j)];
    out.image.block(a.top, a.left, a.side, a.side) = slice.block(b.top, b.left, b.side, b.side);
    out.image.block(b.top, b.left, b.side, b.side) = slice.block(a.top, a.left, a.side, a.side);
  }
  return out;
}

RestorationSample augment_pair(const LongitudinalSlicePair& pair, PretextTask task, Rng& rng,
                               const LayoutConfig& cfg) {
  const int rows = int(pair.target.rows()), cols = int(pair.target.cols());
  const PatchLayout layout = sample_layout(rng, rows, cols, cfg, task == PretextTask::disorder);
  Augmented aug = task == PretextTask::black ? black_patches(pair.target, layout)
                                             : context_disordering(pair.target, layout);
  RestorationSample s{pair, pair.target, std::move(aug.mask)};
  s.pair.target = std::move(aug.image);
  return s;
}

RestorationSample augment_pair(const LongitudinalSlicePair& pair, PretextTask task, Rng& rng) {
  return augment_pair(pair, task, rng, LayoutConfig::for_image(int(pair.target.rows()), int(pair.target.cols())));
}

}  // namespace lss

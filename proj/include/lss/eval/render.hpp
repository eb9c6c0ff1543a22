#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lss/core/slice.hpp"

namespace lss {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

inline constexpr Rgb kHealthyColor{31, 119, 180};  // blue
inline constexpr Rgb kGgoColor{255, 127, 14};      // orange
inline constexpr Rgb kConsColor{44, 160, 44};      // green

struct RgbImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triples

  RgbImage() = default;
  RgbImage(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c * 3, 0) {}
  Rgb at(int y, int x) const {
    const std::size_t i = (std::size_t(y) * cols + x) * 3;
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set(int y, int x, Rgb v) {
    const std::size_t i = (std::size_t(y) * cols + x) * 3;
    data[i] = v.r, data[i + 1] = v.g, data[i + 2] = v.b;
  }
};

/// Grey image (intensities clamped to [0, 1]) with labels 1..3 alpha-blended in.
RgbImage overlay(const Image2D& gray, const LabelImage& labels, double alpha = 0.5);

/// Reference | target | truth overlay | prediction overlay, 2 px black gaps.
RgbImage qualitative_panel(const LongitudinalSlicePair& pair, const LabelImage& pred, const LabelImage& truth);

void write_png(const RgbImage& image, const std::filesystem::path& path);

void render_qualitative(const LongitudinalSlicePair& pair, const LabelImage& pred, const LabelImage& truth,
                        const std::filesystem::path& out_path);

}  // namespace lss

#include "lss/eval/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "lss/core/error.hpp"

namespace lss {

namespace {

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

const Rgb* label_color(std::uint8_t label) {
  switch (label) {
    case 1: return &kHealthyColor;
    case 2: return &kGgoColor;
    case 3: return &kConsColor;
    default: return nullptr;
  }
}

void blit(RgbImage& dst, const RgbImage& src, int x0) {
  for (int y = 0; y < src.rows; ++y)
    for (int x = 0; x < src.cols; ++x) dst.set(y, x0 + x, src.at(y, x));
}

}  // namespace

RgbImage overlay(const Image2D& gray, const LabelImage& labels, double alpha) {
  if (gray.rows() != labels.rows() || gray.cols() != labels.cols()) throw InputError("overlay: shape mismatch");
  RgbImage out(int(gray.rows()), int(gray.cols()));
  for (int y = 0; y < out.rows; ++y)
    for (int x = 0; x < out.cols; ++x) {
      const std::uint8_t v = to_byte(gray(y, x));
      Rgb px{v, v, v};
      if (const Rgb* c = label_color(labels(y, x))) {
        auto mix = [&](std::uint8_t base, std::uint8_t tint) {
          return std::uint8_t(std::lround((1.0 - alpha) * base + alpha * tint));
        };
        px = {mix(v, c->r), mix(v, c->g), mix(v, c->b)};
      }
      out.set(y, x, px);
    }
  return out;
}

RgbImage qualitative_panel(const LongitudinalSlicePair& pair, const LabelImage& pred, const LabelImage& truth) {
  validate(pair);
  const int rows = int(pair.target.rows()), cols = int(pair.target.cols()), gap = 2;
  const LabelImage none = LabelImage::Zero(rows, cols);
  RgbImage panel(rows, 4 * cols + 3 * gap);
  blit(panel, overlay(pair.reference, none), 0);
  blit(panel, overlay(pair.target, none), cols + gap);
  blit(panel, overlay(pair.target, truth), 2 * (cols + gap));
  blit(panel, overlay(pair.target, pred), 3 * (cols + gap));
  return panel;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: cannot initialise encoder for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, png_uint_32(image.cols), png_uint_32(image.rows), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.rows; ++y)
    png_write_row(png, const_cast<png_bytep>(image.data.data() + std::size_t(y) * image.cols * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void render_qualitative(const LongitudinalSlicePair& pair, const LabelImage& pred, const LabelImage& truth,
                        const std::filesystem::path& out_path) {
  write_png(qualitative_panel(pair, pred, truth), out_path);
}

}  // namespace lss

#include "lss/registration/transform_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "lss/core/volume_io.hpp"

namespace lss {
namespace fs = std::filesystem;
using nlohmann::json;

void save_transform(const BSplineTransform& t, const fs::path& header) {
  static_assert(std::endian::native == std::endian::little, "transform payload assumes a little-endian host");
  json h;
  h["format"] = "lss-bspline";
  h["version"] = 1;
  h["grid"] = {t.grid.z, t.grid.y, t.grid.x};
  h["spacing"] = {t.spacing[0], t.spacing[1], t.spacing[2]};
  h["domain"] = {t.domain.z, t.domain.y, t.domain.x};
  h["dtype"] = "f32le";
  h["components"] = "zyx";
  std::vector<float> payload(std::size_t(t.coefficients.size()));
  for (Eigen::Index i = 0; i < t.coefficients.size(); ++i) payload[std::size_t(i)] = float(t.coefficients.data()[i]);
  if (header.has_parent_path()) fs::create_directories(header.parent_path());
  {
    std::ofstream raw(raw_path_for(header), std::ios::binary | std::ios::trunc);
    if (!raw) throw IoError("cannot write " + raw_path_for(header).string());
    raw.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size() * 4));
  }
  std::ofstream out(header, std::ios::trunc);
  if (!out) throw IoError("cannot write " + header.string());
  out << h.dump(2) << "\n";
}

BSplineTransform load_transform(const fs::path& header) {
  std::ifstream in(header);
  if (!in) throw IoError("cannot open " + header.string());
  BSplineTransform t;
  try {
    const json h = json::parse(in);
    if (h.at("format") != "lss-bspline" || h.at("version") != 1)
      throw InputError("transform " + header.string() + ": unsupported format/version");
    if (h.at("dtype") != "f32le") throw InputError("transform " + header.string() + ": field 'dtype' must be f32le");
    const auto g = h.at("grid"), s = h.at("spacing"), d = h.at("domain");
    t.grid = {g[0].get<int>(), g[1].get<int>(), g[2].get<int>()};
    t.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    t.domain = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
  } catch (const json::exception& e) {
    throw InputError("transform " + header.string() + ": " + e.what());
  }
  const bool covers = t.grid.z == control_count(t.domain.z, t.spacing[0]) &&
                      t.grid.y == control_count(t.domain.y, t.spacing[1]) &&
                      t.grid.x == control_count(t.domain.x, t.spacing[2]);
  if (!covers) throw InputError("transform " + header.string() + ": field 'grid' does not cover 'domain'");
  std::ifstream raw(raw_path_for(header), std::ios::binary);
  if (!raw) throw IoError("cannot open " + raw_path_for(header).string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(raw), {}};
  const std::size_t n = t.grid.count() * 3;
  if (bytes.size() != n * 4)
    throw InputError("transform " + header.string() + ": coefficient byte count mismatch");
  t.coefficients = Coefficients(Eigen::Index(t.grid.count()), 3);
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 4 * i, 4);
    if (!std::isfinite(f)) throw InputError("transform " + header.string() + ": non-finite coefficient");
    t.coefficients.data()[i] = f;
  }
  return t;
}

}  // namespace lss

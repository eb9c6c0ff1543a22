#include "lss/core/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace lss {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOrder = "zyx";

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const void* data, std::size_t n) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(static_cast<const char*>(data), std::streamsize(n));
  if (!out) throw IoError("write failed for " + p.string());
}

void write_text(const fs::path& p, const std::string& s) { write_bytes(p, s.data(), s.size()); }

template <typename T>
json make_header(const Volume<T>& v, const char* dtype, const char* unit) {
  json h;
  h["shape"] = {v.shape().z, v.shape().y, v.shape().x};
  h["spacing"] = {v.spacing().z, v.spacing().y, v.spacing().x};
  h["intensity_unit"] = unit;
  h["dtype"] = dtype;
  h["order"] = kOrder;
  return h;
}

struct Header {
  Shape3 shape;
  Spacing3 spacing;
  std::string unit;
};

Header parse_header(const fs::path& path, const char* expected_dtype) {
  json h;
  try {
    h = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError("header " + path.string() + ": malformed JSON (" + e.what() + ")");
  }
  auto need = [&](const char* key) -> const json& {
    if (!h.contains(key)) throw InputError("header " + path.string() + ": missing field '" + key + "'");
    return h.at(key);
  };
  Header out;
  try {
    const auto& shape = need("shape");
    if (!shape.is_array() || shape.size() != 3) throw InputError("");
    out.shape = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
  } catch (const std::exception&) {
    throw InputError("header " + path.string() + ": field 'shape' must be 3 integers");
  }
  if (out.shape.z < 1 || out.shape.y < 1 || out.shape.x < 1)
    throw InputError("header " + path.string() + ": field 'shape' must be >= 1 per axis");
  try {
    const auto& sp = need("spacing");
    if (!sp.is_array() || sp.size() != 3) throw InputError("");
    out.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
  } catch (const std::exception&) {
    throw InputError("header " + path.string() + ": field 'spacing' must be 3 numbers");
  }
  if (!(out.spacing.z > 0 && out.spacing.y > 0 && out.spacing.x > 0))
    throw InputError("header " + path.string() + ": field 'spacing' must be > 0");
  const auto& dtype = need("dtype");
  if (!dtype.is_string() || dtype.get<std::string>() != expected_dtype)
    throw InputError("header " + path.string() + ": field 'dtype' must be \"" + expected_dtype + "\"");
  const auto& order = need("order");
  if (!order.is_string() || order.get<std::string>() != kOrder)
    throw InputError("header " + path.string() + ": field 'order' must be \"zyx\"");
  const auto& unit = need("intensity_unit");
  if (!unit.is_string()) throw InputError("header " + path.string() + ": field 'intensity_unit' must be a string");
  out.unit = unit.get<std::string>();
  return out;
}

void check_payload(const fs::path& raw, std::size_t got, std::size_t expected, const Shape3& shape) {
  if (got != expected)
    throw InputError("payload " + raw.string() + ": shape/byte-count mismatch: shape " + to_string(shape) +
                     " needs " + std::to_string(expected) + " bytes, file has " + std::to_string(got));
}

}  // namespace

fs::path raw_path_for(const fs::path& header) {
  auto s = header.string();
  const std::string suffix = ".json";
  if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
    return s.substr(0, s.size() - suffix.size()) + ".raw";
  return s + ".raw";
}

void save_volume(const Volume3D& volume, const fs::path& header) {
  validate(volume);
  const auto n = volume.size();
  std::vector<std::uint32_t> words(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t w = std::bit_cast<std::uint32_t>(volume[i]);
    if constexpr (std::endian::native == std::endian::big)
      w = (w >> 24) | ((w >> 8) & 0xff00u) | ((w << 8) & 0xff0000u) | (w << 24);
    words[i] = w;
  }
  write_bytes(raw_path_for(header), words.data(), n * 4);
  write_text(header, make_header(volume, "f32le", to_string(volume.unit).c_str()).dump(2) + "\n");
}

void save_mask(const Volume<std::uint8_t>& mask, const fs::path& header) {
  write_bytes(raw_path_for(header), mask.data(), mask.size());
  write_text(header, make_header(mask, "u8", "label").dump(2) + "\n");
}

Volume3D load_volume(const fs::path& header) {
  const Header h = parse_header(header, "f32le");
  Volume3D v(h.shape, h.spacing);
  v.unit = intensity_unit_from_string(h.unit);
  const auto raw = raw_path_for(header);
  const auto bytes = read_bytes(raw);
  check_payload(raw, bytes.size(), v.size() * 4, h.shape);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big)
      w = (w >> 24) | ((w >> 8) & 0xff00u) | ((w << 8) & 0xff0000u) | (w << 24);
    v[i] = std::bit_cast<float>(w);
  }
  validate(v);
  return v;
}

Volume<std::uint8_t> load_mask(const fs::path& header) {
  const Header h = parse_header(header, "u8");
  Volume<std::uint8_t> m(h.shape, h.spacing);
  const auto raw = raw_path_for(header);
  const auto bytes = read_bytes(raw);
  check_payload(raw, bytes.size(), m.size(), h.shape);
  std::memcpy(m.data(), bytes.data(), bytes.size());
  validate_labels(m);
  return m;
}

}  // namespace lss

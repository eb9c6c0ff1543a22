#include "lss/core/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "lss/core/error.hpp"

namespace lss {

void Fnv1a::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= std::uint64_t(b);
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Fnv1a h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::as_bytes(std::span(buf.data(), std::size_t(in.gcount()))));
  }
  return h.hex();
}

std::string hash_string(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.hex();
}

}  // namespace lss

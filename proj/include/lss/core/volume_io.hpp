#pragma once

#include <filesystem>

#include "lss/core/volume.hpp"

namespace lss {

// Two-file container: `<stem>.vol.json` header + `<stem>.vol.raw` payload
// (little-endian, C order). Float volumes use dtype "f32le", masks "u8".
// Paths passed here are the header path; the payload path is derived.

std::filesystem::path raw_path_for(const std::filesystem::path& header);

void save_volume(const Volume3D& volume, const std::filesystem::path& header);
void save_mask(const Volume<std::uint8_t>& mask, const std::filesystem::path& header);

Volume3D load_volume(const std::filesystem::path& header);
Volume<std::uint8_t> load_mask(const std::filesystem::path& header);

}  // namespace lss

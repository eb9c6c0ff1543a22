#pragma once

#include <filesystem>

#include "lss/registration/bspline.hpp"

namespace lss {

// `<stem>.bspline.json` header + `<stem>.bspline.raw` float32 LE payload,
// one (dz, dy, dx) triple per control point in C order.
void save_transform(const BSplineTransform& t, const std::filesystem::path& header);
BSplineTransform load_transform(const std::filesystem::path& header);

}  // namespace lss

#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lss/core/error.hpp"

namespace lss {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                                const std::string& context) {
  if (!j.is_object()) throw InputError(context + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw InputError(context + ": unknown key \"" + key + "\"");
}

template <typename V>
void read_if(const nlohmann::json& j, const char* key, V& out, const std::string& context) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception&) {
    throw InputError(context + ": bad value for '" + key + "'");
  }
}

}  // namespace lss

#include "lss/model/config.hpp"

#include "lss/core/error.hpp"
#include "lss/core/json_util.hpp"

namespace lss {

std::string to_string(Head h) {
  switch (h) {
    case Head::restoration: return "restoration";
    case Head::segmentation: return "segmentation";
    case Head::classification: return "classification";
  }
  return "?";
}

Head head_from_string(const std::string& s) {
  if (s == "restoration") return Head::restoration;
  if (s == "segmentation") return Head::segmentation;
  if (s == "classification") return Head::classification;
  throw InputError("model: unknown head \"" + s + "\"");
}

void ModelConfig::validate() const {
  if (in_channels != 1 && in_channels != 2) throw InputError("model: in_channels must be 1 or 2");
  if (n_transitions_down != 5 || n_transitions_up != 5)
    throw InputError("model: the backbone has exactly 5 transitions down and 5 up");
  if (growth_rate < 1 || layers_per_block < 1 || initial_features < 1)
    throw InputError("model: growth_rate, layers_per_block and initial_features must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw InputError("model: dropout must lie in [0, 1)");
}

int ModelConfig::output_channels() const {
  switch (head) {
    case Head::restoration: return 1;
    case Head::segmentation: return 4;
    case Head::classification: return 2;
  }
  return 0;
}

bool ModelConfig::same_trunk(const ModelConfig& o) const {
  return in_channels == o.in_channels && growth_rate == o.growth_rate && layers_per_block == o.layers_per_block &&
         n_transitions_down == o.n_transitions_down && n_transitions_up == o.n_transitions_up &&
         initial_features == o.initial_features;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels},
                     {"growth_rate", c.growth_rate},
                     {"layers_per_block", c.layers_per_block},
                     {"n_transitions_down", c.n_transitions_down},
                     {"n_transitions_up", c.n_transitions_up},
                     {"initial_features", c.initial_features},
                     {"head", to_string(c.head)},
                     {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string ctx = "model";
  reject_unknown_keys(j,
                      {"in_channels", "growth_rate", "layers_per_block", "n_transitions_down", "n_transitions_up",
                       "initial_features", "head", "dropout"},
                      ctx);
  read_if(j, "in_channels", c.in_channels, ctx);
  read_if(j, "growth_rate", c.growth_rate, ctx);
  read_if(j, "layers_per_block", c.layers_per_block, ctx);
  read_if(j, "n_transitions_down", c.n_transitions_down, ctx);
  read_if(j, "n_transitions_up", c.n_transitions_up, ctx);
  read_if(j, "initial_features", c.initial_features, ctx);
  read_if(j, "dropout", c.dropout, ctx);
  if (j.contains("head")) c.head = head_from_string(j.at("head").get<std::string>());
}

}  // namespace lss

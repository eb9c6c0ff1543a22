#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace lss {

enum class Head { restoration, segmentation, classification };

std::string to_string(Head h);
Head head_from_string(const std::string& s);

struct ModelConfig {
  int in_channels = 2;  // 1 static, 2 longitudinal
  int growth_rate = 12;
  int layers_per_block = 4;
  int n_transitions_down = 5;
  int n_transitions_up = 5;
  int initial_features = 48;
  Head head = Head::restoration;
  double dropout = 0.2;

  void validate() const;
  int output_channels() const;

  /// Input channels of down block i (i == n_transitions_down is the bottleneck).
  int down_channels(int i) const { return initial_features + i * layers_per_block * growth_rate; }
  int block_growth() const { return layers_per_block * growth_rate; }
  /// Same backbone, possibly different head.
  bool same_trunk(const ModelConfig& o) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace lss

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lss/core/manifest.hpp"
#include "lss/core/preprocess.hpp"
#include "lss/registration/register.hpp"
#include "lss/synthdata/phantom.hpp"
#include "lss/train/data.hpp"
#include "lss/train/trainer.hpp"

namespace lss {

struct SynthSection {
  std::filesystem::path out_dir = "data";
  DatasetSpec spec;
};

struct PreprocessSection {
  std::filesystem::path manifest = "data/manifest.json";
  std::filesystem::path cache_dir = "cache";
  int crop_margin = kDefaultCropMargin;
  std::optional<ClipRange> clip = kDefaultHuClip;
  RegistrationParams registration;
};

struct TrainSection {
  TrainConfig train;
  std::optional<std::filesystem::path> init;  // checkpoint json
};

struct EvaluateSection {
  Split split = Split::test;
  int n_resamples = 1000;
  int qualitative = 3;  // PNG panels per segmentation run
};

/// Whole-pipeline configuration. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::filesystem::path base_dir = ".";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  std::string backend = "cpu";
  SynthSection synth;
  PreprocessSection preprocess;
  SliceOptions slices;
  TrainSection pretrain;
  TrainSection finetune;
  EvaluateSection evaluate;

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

/// Parses and validates; unknown keys anywhere are rejected. Environment
/// overrides: LSS_OUTPUT_ROOT (output_dir), LSS_BACKEND (backend).
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& c);

}  // namespace lss

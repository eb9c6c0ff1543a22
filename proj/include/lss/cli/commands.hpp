#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lss/cli/config.hpp"

namespace lss {

/// Short content hash of a resolved configuration.
std::string run_id(const nlohmann::json& resolved);

/// Writes the synthetic dataset; returns the manifest path.
std::filesystem::path synth_generate(const RunConfig& cfg, std::ostream& log);

struct PreprocessSummary {
  int pairs = 0;
  int computed = 0;
  int cached = 0;
  std::vector<std::string> warnings;
  std::filesystem::path cache_dir;
};

/// Crop, normalize and register every past -> future pair of the manifest.
/// Entries whose inputs and settings are unchanged are skipped.
PreprocessSummary preprocess(const RunConfig& cfg, std::ostream& log);

/// Regime selectors that may be given on the command line.
struct TrainOverrides {
  std::optional<TrainTask> task;
  std::optional<bool> longitudinal;
  std::optional<std::filesystem::path> init;  // finetune only; "none" clears the configured init
  bool clear_init = false;
};

enum class TrainStage { pretrain, finetune_seg, finetune_cls };

/// Trains one regime; returns the run directory (`<output>/<stage>-<run id>`).
std::filesystem::path train_command(const RunConfig& cfg, TrainStage stage, const TrainOverrides& overrides,
                                    std::ostream& log);

/// Evaluates the checkpoint of a finetuning run on the configured split;
/// returns the evaluation directory.
std::filesystem::path evaluate_command(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);

/// Aggregates evaluation directories (all `eval-*` under the output root when
/// `eval_dirs` is empty) into the report tables; returns the report directory.
std::filesystem::path report_command(const RunConfig& cfg, const std::vector<std::filesystem::path>& eval_dirs,
                                     const std::optional<std::filesystem::path>& out_dir, std::ostream& log);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace lss

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lss {

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // the selection metric
  nlohmann::json details = nlohmann::json::object();
  double seconds = 0.0;
};

struct TrainLog {
  nlohmann::json config = nlohmann::json::object();
  std::string selection;  // "min val_loss", "max val_mean_dice", "max val_mean_accuracy"
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
  long steps = 0;
};

/// Writes `train_log.jsonl` (one record per epoch) and `run.json` (config
/// echo, selection, timing) into `dir`.
void write_train_log(const TrainLog& log, const std::filesystem::path& dir);
TrainLog read_train_log(const std::filesystem::path& dir);

}  // namespace lss

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lss/augment/augment.hpp"
#include "lss/core/slice.hpp"
#include "lss/model/checkpoint.hpp"
#include "lss/train/optim.hpp"
#include "lss/train/train_log.hpp"

namespace lss {

enum class TrainTask { pretext_black, pretext_disorder, seg, cls };

std::string to_string(TrainTask t);
TrainTask task_from_string(const std::string& s);
bool is_pretext(TrainTask t);

struct AugmentConfig {
  int count_min = 16;
  int count_max = 25;
  int side_min = 8;
  int side_max = 16;
  int max_attempts = 1000;
  bool within_lung = false;  // patch centres restricted to the target lung

  LayoutConfig layout() const;
};

struct TrainConfig {
  TrainTask task = TrainTask::seg;
  bool longitudinal = true;
  int max_epochs = 0;  // 0 selects the task default: 100 pretext, 30 otherwise
  int batch_size = 4;
  AdamParams adam;
  int patience = 5;  // early stopping, pretext tasks only
  std::uint64_t seed = 0;
  bool masked_patch_mean = false;
  double dice_eps = 1e-5;
  int steps_per_epoch = 0;  // 0: one pass over the training slices
  int max_val_slices = 0;   // 0: all validation slices
  AugmentConfig augment;
  ModelConfig model;  // in_channels and head are derived from task/longitudinal

  void validate() const;
  int epochs() const;
  ModelConfig resolved_model() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  Checkpoint checkpoint;  // best epoch
  TrainLog log;
  std::optional<TransferReport> transfer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Restoration pretraining with early stopping on the validation loss.
TrainResult pretrain(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                     const std::vector<LongitudinalSlicePair>& val, const EpochCallback& on_epoch = {});

/// Dice-loss training; selects the epoch with the highest validation mean
/// Dice over healthy, GGO and consolidation.
TrainResult finetune_segmentation(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                                  const std::vector<LongitudinalSlicePair>& val, const Checkpoint* init = nullptr,
                                  const EpochCallback& on_epoch = {});

/// BCE training of encoder + linear head; selects on mean per-class accuracy.
TrainResult finetune_classification(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                                    const std::vector<LongitudinalSlicePair>& val, const Checkpoint* init = nullptr,
                                    const EpochCallback& on_epoch = {});

/// Restoration sample for validation: the corruption of sample `index` is
/// the same in every epoch.
RestorationSample validation_sample(const LongitudinalSlicePair& pair, PretextTask task, const AugmentConfig& aug,
                                    std::uint64_t seed, std::size_t index);

std::unique_ptr<nn::Tiramisu<float>> network_from_checkpoint(const Checkpoint& c);

std::vector<LabelImage> predict_segmentation(nn::Tiramisu<float>& net, const std::vector<LongitudinalSlicePair>& slices,
                                             bool longitudinal, int batch_size = 4);

/// Sigmoid scores (GGO, consolidation) per slice.
std::vector<std::array<double, 2>> predict_classification(nn::Tiramisu<float>& net,
                                                          const std::vector<LongitudinalSlicePair>& slices,
                                                          bool longitudinal, int batch_size = 4);

}  // namespace lss

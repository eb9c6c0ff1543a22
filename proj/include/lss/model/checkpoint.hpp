#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lss/core/error.hpp"
#include "lss/model/config.hpp"
#include "lss/model/tiramisu.hpp"

namespace lss {

inline constexpr int kCheckpointVersion = 1;

/// Raised when checkpoint weights cannot be moved into a network.
class TransferError : public InputError {
 public:
  using InputError::InputError;
};

struct TensorRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
  bool buffer = false;
};

struct CheckpointMeta {
  std::string task;  // pretext_black, pretext_disorder, seg, cls
  bool longitudinal = true;
  std::string pretraining = "none";  // pretext task of the init checkpoint: none, black, disorder
  int epoch = -1;    // 1-based selected epoch
  double val_metric = std::nan("");
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelConfig config;
  CheckpointMeta meta;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
};

/// Writes `<stem>.ckpt.json` (metadata, tensor table) and `<stem>.ckpt.bin`
/// (float32 little-endian payload). `path` names the json file.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_payload_path(const std::filesystem::path& path);

enum class TransferMode { full_trunk, encoder_only };

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> initialized;
};

bool is_encoder_param(const std::string& name);
bool is_head_param(const std::string& name);

template <typename T>
Checkpoint capture(const nn::Tiramisu<T>& net, const CheckpointMeta& meta) {
  Checkpoint c;
  c.config = net.config();
  c.meta = meta;
  for (const auto& p : net.params().items()) {
    TensorRecord r{p.name, p.shape, std::vector<float>(p.value.begin(), p.value.end()), !p.trainable};
    c.tensors.push_back(std::move(r));
  }
  return c;
}

namespace detail {
template <typename T>
void copy_into(const TensorRecord& r, nn::Param<T>& p) {
  if (r.shape != p.shape) throw TransferError("checkpoint: shape mismatch for " + p.name);
  std::copy(r.values.begin(), r.values.end(), p.value.begin());
}
}  // namespace detail

/// Exact restore: the network must have the checkpoint's configuration.
template <typename T>
void load_into(const Checkpoint& c, nn::Tiramisu<T>& net) {
  if (!c.config.same_trunk(net.config()) || c.config.head != net.config().head)
    throw TransferError("checkpoint: configuration does not match the network");
  for (auto& p : net.params().items()) {
    const TensorRecord* r = c.find(p.name);
    if (!r) throw TransferError("checkpoint: missing tensor " + p.name);
    detail::copy_into(*r, p);
  }
}

/// Copies trunk weights from a checkpoint into a freshly built network.
/// full_trunk copies everything except the head; encoder_only copies the stem,
/// the down path and the bottleneck. Everything else keeps its fresh init.
template <typename T>
TransferReport transfer_weights(const Checkpoint& c, nn::Tiramisu<T>& net, TransferMode mode) {
  const ModelConfig& target = net.config();
  if (c.config.in_channels != target.in_channels)
    throw TransferError("transfer: checkpoint has " + std::to_string(c.config.in_channels) +
                        " input channels, network expects " + std::to_string(target.in_channels) +
                        " (static and longitudinal weights are not interchangeable)");
  if (!c.config.same_trunk(target)) throw TransferError("transfer: trunk hyperparameters differ");
  TransferReport report;
  for (auto& p : net.params().items()) {
    const bool wanted = mode == TransferMode::full_trunk ? !is_head_param(p.name) : is_encoder_param(p.name);
    const TensorRecord* r = wanted ? c.find(p.name) : nullptr;
    if (wanted && !r) throw TransferError("transfer: checkpoint lacks " + p.name);
    if (r) {
      detail::copy_into(*r, p);
      report.copied.push_back(p.name);
    } else {
      report.initialized.push_back(p.name);
    }
  }
  return report;
}

}  // namespace lss

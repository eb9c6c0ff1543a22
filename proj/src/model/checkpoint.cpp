#include "lss/model/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace lss {

namespace fs = std::filesystem;

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

bool is_head_param(const std::string& name) { return name.rfind("head.", 0) == 0; }

bool is_encoder_param(const std::string& name) {
  return name.rfind("stem.", 0) == 0 || name.rfind("down", 0) == 0 || name.rfind("bottleneck.", 0) == 0;
}

fs::path checkpoint_payload_path(const fs::path& path) {
  std::string s = path.string();
  const std::string suffix = ".json";
  if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
    s.resize(s.size() - suffix.size());
  return s + ".bin";
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()},
                     {"buffer", t.buffer}});
    offset += t.values.size();
  }
  nlohmann::json meta = {{"task", ckpt.meta.task},         {"longitudinal", ckpt.meta.longitudinal},
                         {"pretraining", ckpt.meta.pretraining},
                         {"epoch", ckpt.meta.epoch},       {"seed", ckpt.meta.seed},
                         {"val_metric", std::isfinite(ckpt.meta.val_metric) ? nlohmann::json(ckpt.meta.val_metric)
                                                                            : nlohmann::json(nullptr)}};
  nlohmann::json j = {{"format", "lss-checkpoint"}, {"version", kCheckpointVersion}, {"dtype", "f32le"},
                      {"model", ckpt.config},       {"meta", meta},                  {"tensors", table}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream bin(checkpoint_payload_path(path), std::ios::binary);
    if (!bin) throw IoError("cannot write " + checkpoint_payload_path(path).string());
    for (const auto& t : ckpt.tensors)
      bin.write(reinterpret_cast<const char*>(t.values.data()), std::streamsize(t.values.size() * sizeof(float)));
    if (!bin) throw IoError("cannot write " + checkpoint_payload_path(path).string());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
  const std::string ctx = "checkpoint " + path.string();
  if (j.value("format", "") != "lss-checkpoint") throw InputError(ctx + ": not a checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    throw InputError(ctx + ": unsupported version " + j.value("version", nlohmann::json()).dump());
  Checkpoint c;
  try {
    c.config = j.at("model").get<ModelConfig>();
    const auto& m = j.at("meta");
    c.meta.task = m.at("task").get<std::string>();
    c.meta.longitudinal = m.at("longitudinal").get<bool>();
    c.meta.pretraining = m.at("pretraining").get<std::string>();
    c.meta.epoch = m.at("epoch").get<int>();
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    c.meta.val_metric = m.at("val_metric").is_null() ? std::nan("") : m.at("val_metric").get<double>();
    std::ifstream bin(checkpoint_payload_path(path), std::ios::binary);
    if (!bin) throw IoError("cannot read " + checkpoint_payload_path(path).string());
    for (const auto& t : j.at("tensors")) {
      TensorRecord r;
      r.name = t.at("name").get<std::string>();
      r.shape = t.at("shape").get<std::vector<int>>();
      r.buffer = t.at("buffer").get<bool>();
      r.values.resize(t.at("count").get<std::size_t>());
      bin.seekg(std::streamoff(t.at("offset").get<std::size_t>() * sizeof(float)));
      bin.read(reinterpret_cast<char*>(r.values.data()), std::streamsize(r.values.size() * sizeof(float)));
      if (!bin) throw InputError(ctx + ": truncated payload");
      c.tensors.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(ctx + ": " + e.what());
  }
  c.config.validate();
  return c;
}

}  // namespace lss

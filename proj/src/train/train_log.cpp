#include "lss/train/train_log.hpp"

#include <fstream>

#include "lss/core/error.hpp"

namespace lss {

namespace fs = std::filesystem;

void write_train_log(const TrainLog& log, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "train_log.jsonl");
    if (!out) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
    for (const auto& e : log.epochs)
      out << nlohmann::json{{"epoch", e.epoch},           {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                            {"val_metric", e.val_metric}, {"details", e.details},       {"seconds", e.seconds}}
                 .dump()
          << "\n";
  }
  std::ofstream out(dir / "run.json");
  if (!out) throw IoError("cannot write " + (dir / "run.json").string());
  out << nlohmann::json{{"config", log.config},
                        {"selection", log.selection},
                        {"selected_epoch", log.selected_epoch},
                        {"early_stopped", log.early_stopped},
                        {"epochs_run", log.epochs.size()},
                        {"steps", log.steps},
                        {"wall_seconds", log.wall_seconds}}
             .dump(1)
      << "\n";
}

TrainLog read_train_log(const fs::path& dir) {
  TrainLog log;
  try {
    std::ifstream run(dir / "run.json");
    if (!run) throw IoError("cannot read " + (dir / "run.json").string());
    const auto r = nlohmann::json::parse(run);
    log.config = r.at("config");
    log.selection = r.at("selection").get<std::string>();
    log.selected_epoch = r.at("selected_epoch").get<int>();
    log.early_stopped = r.at("early_stopped").get<bool>();
    log.steps = r.at("steps").get<long>();
    log.wall_seconds = r.at("wall_seconds").get<double>();
    std::ifstream in(dir / "train_log.jsonl");
    if (!in) throw IoError("cannot read " + (dir / "train_log.jsonl").string());
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.train_loss = j.at("train_loss").get<double>();
      e.val_loss = j.at("val_loss").get<double>();
      e.val_metric = j.at("val_metric").get<double>();
      e.details = j.at("details");
      e.seconds = j.at("seconds").get<double>();
      log.epochs.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("train log in " + dir.string() + ": " + e.what());
  }
  return log;
}

}  // namespace lss

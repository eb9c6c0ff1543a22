#include "lss/core/manifest.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "lss/core/error.hpp"

namespace lss {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InputError("split: expected train/val/test, got \"" + s + "\"");
}

const PatientRecord& DatasetManifest::patient(const std::string& id) const {
  for (const auto& p : patients)
    if (p.id == id) return p;
  throw InputError("manifest: unknown patient \"" + id + "\"");
}

std::vector<const PatientRecord*> DatasetManifest::in_split(Split s) const {
  std::vector<const PatientRecord*> out;
  for (const auto& p : patients)
    if (p.split == s) out.push_back(&p);
  return out;
}

void validate(const DatasetManifest& m, bool check_files) {
  std::set<std::string> ids;
  for (const auto& p : m.patients) {
    if (p.id.empty()) throw InputError("manifest: empty patient id");
    if (!ids.insert(p.id).second) throw InputError("manifest: patient \"" + p.id + "\" listed twice");
    for (std::size_t t = 1; t < p.timepoints.size(); ++t)
      if (p.timepoints[t].ordinal <= p.timepoints[t - 1].ordinal)
        throw InputError("manifest: timepoints of \"" + p.id + "\" are not strictly ordered");
    if (!check_files) continue;
    for (const auto& tp : p.timepoints) {
      std::vector<fs::path> files{tp.volume, tp.lung_mask};
      if (tp.seg_mask) files.push_back(*tp.seg_mask);
      for (const auto& f : files)
        if (!fs::exists(m.resolve(f)))
          throw InputError("manifest: file " + m.resolve(f).string() + " (patient \"" + p.id + "\") does not exist");
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("manifest " + path.string() + ": malformed JSON (" + e.what() + ")");
  }
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    if (j.at("version").get<int>() != 1) throw InputError("manifest: unsupported version");
    for (const auto& jp : j.at("patients")) {
      PatientRecord p;
      p.id = jp.at("id").get<std::string>();
      p.split = split_from_string(jp.at("split").get<std::string>());
      for (const auto& jt : jp.at("timepoints")) {
        Timepoint t;
        t.ordinal = jt.at("ordinal").get<int>();
        t.volume = jt.at("volume").get<std::string>();
        t.lung_mask = jt.at("lung_mask").get<std::string>();
        if (jt.contains("seg_mask") && !jt.at("seg_mask").is_null())
          t.seg_mask = jt.at("seg_mask").get<std::string>();
        p.timepoints.push_back(std::move(t));
      }
      m.patients.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw InputError("manifest " + path.string() + ": " + e.what());
  }
  validate(m);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["version"] = 1;
  j["patients"] = json::array();
  for (const auto& p : m.patients) {
    json jp{{"id", p.id}, {"split", to_string(p.split)}, {"timepoints", json::array()}};
    for (const auto& t : p.timepoints) {
      json jt{{"ordinal", t.ordinal},
              {"volume", t.volume.generic_string()},
              {"lung_mask", t.lung_mask.generic_string()}};
      jt["seg_mask"] = t.seg_mask ? json(t.seg_mask->generic_string()) : json(nullptr);
      jp["timepoints"].push_back(std::move(jt));
    }
    j["patients"].push_back(std::move(jp));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<std::pair<int, int>> enumerate_pairs(int timepoint_count) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < timepoint_count; ++i)
    for (int j = i + 1; j < timepoint_count; ++j) out.emplace_back(i, j);
  return out;
}

std::vector<std::pair<int, int>> enumerate_pairs(const DatasetManifest& m, const std::string& patient_id) {
  return enumerate_pairs(int(m.patient(patient_id).timepoints.size()));
}

}  // namespace lss

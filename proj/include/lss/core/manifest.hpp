#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lss {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Timepoint {
  int ordinal = 0;
  std::filesystem::path volume;
  std::filesystem::path lung_mask;
  std::optional<std::filesystem::path> seg_mask;
};

struct PatientRecord {
  std::string id;
  Split split = Split::train;
  std::vector<Timepoint> timepoints;
};

/// Patients, their ordered timepoints and split membership. Paths are stored
/// relative to `root` (the manifest's directory) and resolved on demand.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<PatientRecord> patients;

  const PatientRecord& patient(const std::string& id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const { return root / p; }
  std::vector<const PatientRecord*> in_split(Split s) const;
};

/// Structural checks: unique patient ids, strictly increasing ordinals and,
/// if `check_files`, that every referenced file exists.
void validate(const DatasetManifest& m, bool check_files = true);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// All past -> future index pairs (i < j) into the patient's timepoints.
std::vector<std::pair<int, int>> enumerate_pairs(const DatasetManifest& m, const std::string& patient_id);
std::vector<std::pair<int, int>> enumerate_pairs(int timepoint_count);

}  // namespace lss

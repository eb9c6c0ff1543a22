#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lss/core/rng.hpp"
#include "lss/core/slice.hpp"

namespace lss {

enum class Pretraining { none, black, disorder };

std::string to_string(Pretraining p);
Pretraining pretraining_from_string(const std::string& s);
/// Row label used in the tables: "No pretraining", "Black patches", "Context disordering".
std::string row_label(Pretraining p);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct SegMetrics {
  MeanStd healthy, ggo, cons;
  MeanStd overall;        // micro Dice over the foreground classes
  MeanStd overall_macro;  // mean of the three class Dice values
  int n_patients = 0;
  int n_slices = 0;
};

struct ClsMetrics {
  std::optional<MeanStd> auc;
  MeanStd accuracy_overall, accuracy_ggo, accuracy_cons;
  int n_patients = 0;
  int n_slices = 0;
};

/// Pools pixels per patient, computes the Dice values per patient and
/// bootstraps their mean over patients.
SegMetrics aggregate_segmentation(const std::vector<LabelImage>& pred, const std::vector<LongitudinalSlicePair>& slices,
                                  int n_resamples, Rng& rng);

/// Bootstraps AUC and accuracies over patients, pooling the slices of the
/// resampled patients. `scores` holds sigmoid (GGO, CONS) per slice.
ClsMetrics aggregate_classification(const std::vector<std::array<double, 2>>& scores,
                                    const std::vector<LongitudinalSlicePair>& slices, int n_resamples, Rng& rng);

struct SegRegime {
  bool longitudinal = true;
  Pretraining pretraining = Pretraining::none;
  std::string split = "test";
  int n_resamples = 0;
  SegMetrics metrics;
};

struct ClsRegime {
  bool longitudinal = true;
  Pretraining pretraining = Pretraining::none;
  std::string split = "test";
  int n_resamples = 0;
  ClsMetrics metrics;
};

void to_json(nlohmann::json& j, const SegRegime& r);
void to_json(nlohmann::json& j, const ClsRegime& r);

struct SegReport {
  std::vector<SegRegime> regimes;
  const SegRegime* find(bool longitudinal, Pretraining p) const;
};

struct ClsReport {
  std::vector<ClsRegime> regimes;
  const ClsRegime* find(bool longitudinal, Pretraining p) const;
};

inline constexpr const char* kEvaluationFile = "evaluation.json";

/// Reads `evaluation.json` from every run directory. Later runs replace
/// earlier ones of the same regime.
std::pair<SegReport, ClsReport> collect_reports(const std::vector<std::filesystem::path>& run_dirs);

std::string segmentation_table_markdown(const SegReport& r);
std::string classification_table_markdown(const ClsReport& r);
std::string segmentation_table_csv(const SegReport& r);
std::string classification_table_csv(const ClsReport& r);

/// Writes report.md, table1_segmentation.csv and table2_classification.csv;
/// returns the written paths.
std::vector<std::filesystem::path> write_reports(const SegReport& seg, const ClsReport& cls,
                                                 const std::filesystem::path& out_dir);

}  // namespace lss

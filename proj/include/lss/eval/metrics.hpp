#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lss/core/rng.hpp"
#include "lss/core/slice.hpp"

namespace lss {

/// 2|P_c n G_c| / (|P_c| + |G_c|); 1 when both sets are empty.
double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int c);
double dice_score(const LabelImage& pred, const LabelImage& truth, int c);

/// Pixel counts per label, pooled over any number of images.
struct DiceCounts {
  std::array<std::int64_t, 4> intersection{};
  std::array<std::int64_t, 4> pred{};
  std::array<std::int64_t, 4> truth{};

  void add(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t);
  void add(const LabelImage& p, const LabelImage& t);
  DiceCounts& operator+=(const DiceCounts& o);

  double dice(int c) const;
  /// Pooled over the foreground classes 1..3.
  double micro() const;
  /// Mean of the per-class Dice over 1..3; with `present_only`, classes empty
  /// in both prediction and truth are skipped.
  double macro(bool present_only = false) const;
  bool present(int c) const { return pred[c] + truth[c] > 0; }
};

struct OverallDice {
  double micro = 0.0;
  double macro = 0.0;
};

OverallDice overall_dice(const LabelImage& pred, const LabelImage& truth, bool macro_present_only = false);

/// Area under the ROC curve with midrank ties; absent when only one class occurs.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Fraction of samples whose thresholded score (score >= threshold is
/// positive) equals the label.
double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold = 0.5);

struct ClassificationScores {
  std::vector<double> ggo;   // sigmoid probabilities
  std::vector<double> cons;
  std::vector<std::uint8_t> ggo_truth;
  std::vector<std::uint8_t> cons_truth;

  void add(double ggo_score, double cons_score, const PathologyLabels& truth);
  std::size_t size() const { return ggo.size(); }
};

struct ClassificationMetrics {
  std::optional<double> auc;  // mean over the label columns that have both classes
  std::optional<double> auc_ggo;
  std::optional<double> auc_cons;
  double accuracy_ggo = 0.0;
  double accuracy_cons = 0.0;
  double accuracy_overall = 0.0;  // mean of the two per-class accuracies
};

ClassificationMetrics classification_metrics(const ClassificationScores& s, double threshold = 0.5);

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;
};

/// Resamples `n_groups` groups with replacement and evaluates `metric` on the
/// resampled group indices. Resamples where `metric` is absent are skipped.
BootstrapResult bootstrap_ci(int n_groups, const std::function<std::optional<double>(std::span<const int>)>& metric,
                             int n_resamples, Rng& rng);

/// Bootstrap of the mean of per-group values.
BootstrapResult bootstrap_mean(std::span<const double> values, int n_resamples, Rng& rng);

}  // namespace lss

#include "lss/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lss/core/error.hpp"

namespace lss {

namespace {

std::span<const std::uint8_t> pixels(const LabelImage& im) { return {im.data(), std::size_t(im.size())}; }

double ratio(std::int64_t inter, std::int64_t total) { return total == 0 ? 1.0 : 2.0 * double(inter) / double(total); }

}  // namespace

double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int c) {
  if (pred.size() != truth.size()) throw InputError("dice_score: shape mismatch");
  std::int64_t inter = 0, p = 0, t = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == c, b = truth[i] == c;
    inter += a && b;
    p += a;
    t += b;
  }
  return ratio(inter, p + t);
}

double dice_score(const LabelImage& pred, const LabelImage& truth, int c) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw InputError("dice_score: shape mismatch");
  return dice_score(pixels(pred), pixels(truth), c);
}

void DiceCounts::add(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t) {
  if (p.size() != t.size()) throw InputError("dice: shape mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 3 || t[i] > 3) throw InputError("dice: label outside 0..3");
    ++pred[p[i]];
    ++truth[t[i]];
    if (p[i] == t[i]) ++intersection[p[i]];
  }
}

void DiceCounts::add(const LabelImage& p, const LabelImage& t) {
  if (p.rows() != t.rows() || p.cols() != t.cols()) throw InputError("dice: shape mismatch");
  add(pixels(p), pixels(t));
}

DiceCounts& DiceCounts::operator+=(const DiceCounts& o) {
  for (int c = 0; c < 4; ++c) {
    intersection[c] += o.intersection[c];
    pred[c] += o.pred[c];
    truth[c] += o.truth[c];
  }
  return *this;
}

double DiceCounts::dice(int c) const { return ratio(intersection[c], pred[c] + truth[c]); }

double DiceCounts::micro() const {
  std::int64_t inter = 0, total = 0;
  for (int c = 1; c < 4; ++c) {
    inter += intersection[c];
    total += pred[c] + truth[c];
  }
  return ratio(inter, total);
}

double DiceCounts::macro(bool present_only) const {
  double sum = 0.0;
  int n = 0;
  for (int c = 1; c < 4; ++c) {
    if (present_only && !present(c)) continue;
    sum += dice(c);
    ++n;
  }
  return n == 0 ? 1.0 : sum / n;
}

OverallDice overall_dice(const LabelImage& pred, const LabelImage& truth, bool macro_present_only) {
  DiceCounts d;
  d.add(pred, truth);
  return {d.micro(), d.macro(macro_present_only)};
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InputError("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i]) {
      ++pos;
      rank_sum += rank[i];
    }
  const double neg = double(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  if (scores.size() != labels.size()) throw InputError("accuracy: size mismatch");
  if (scores.empty()) throw InputError("accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] >= threshold) == (labels[i] != 0);
  return double(correct) / double(scores.size());
}

void ClassificationScores::add(double ggo_score, double cons_score, const PathologyLabels& truth) {
  ggo.push_back(ggo_score);
  cons.push_back(cons_score);
  ggo_truth.push_back(truth.ggo_present);
  cons_truth.push_back(truth.cons_present);
}

ClassificationMetrics classification_metrics(const ClassificationScores& s, double threshold) {
  ClassificationMetrics m;
  m.auc_ggo = roc_auc(s.ggo, s.ggo_truth);
  m.auc_cons = roc_auc(s.cons, s.cons_truth);
  if (m.auc_ggo && m.auc_cons)
    m.auc = 0.5 * (*m.auc_ggo + *m.auc_cons);
  else if (m.auc_ggo || m.auc_cons)
    m.auc = m.auc_ggo ? m.auc_ggo : m.auc_cons;
  m.accuracy_ggo = accuracy(s.ggo, s.ggo_truth, threshold);
  m.accuracy_cons = accuracy(s.cons, s.cons_truth, threshold);
  m.accuracy_overall = 0.5 * (m.accuracy_ggo + m.accuracy_cons);
  return m;
}

BootstrapResult bootstrap_ci(int n_groups, const std::function<std::optional<double>(std::span<const int>)>& metric,
                             int n_resamples, Rng& rng) {
  if (n_groups < 2) throw InputError("bootstrap: need at least two groups");
  if (n_resamples < 1) throw InputError("bootstrap: need at least one resample");
  std::vector<int> idx(static_cast<std::size_t>(n_groups));
  std::vector<double> values;
  values.reserve(std::size_t(n_resamples));
  for (int r = 0; r < n_resamples; ++r) {
    for (auto& i : idx) i = uniform_int(rng, 0, n_groups - 1);
    if (auto v = metric(idx)) values.push_back(*v);
  }
  if (values.empty()) throw InputError("bootstrap: metric undefined on every resample");
  // Shifted by the first value so that a constant metric has exactly zero spread.
  const double shift = values.front();
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - shift - mean) * (v - shift - mean);
  return {shift + mean, std::sqrt(var / double(values.size()))};
}

BootstrapResult bootstrap_mean(std::span<const double> values, int n_resamples, Rng& rng) {
  return bootstrap_ci(
      int(values.size()),
      [&](std::span<const int> idx) -> std::optional<double> {
        double s = 0.0;
        for (int i : idx) s += values[std::size_t(i)];
        return s / double(idx.size());
      },
      n_resamples, rng);
}

}  // namespace lss

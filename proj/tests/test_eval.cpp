#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lss/core/hash.hpp"
#include "lss/eval/metrics.hpp"
#include "lss/eval/render.hpp"
#include "lss/eval/report.hpp"
#include "test_util.hpp"

using namespace lss;

namespace {

double auc_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// All n^n ordered resamples, weighted equally.
BootstrapResult exhaustive_bootstrap(const std::vector<double>& v) {
  const int n = int(v.size());
  int total = 1;
  for (int i = 0; i < n; ++i) total *= n;
  std::vector<double> means;
  for (int code = 0; code < total; ++code) {
    double s = 0;
    for (int k = 0, c = code; k < n; ++k, c /= n) s += v[std::size_t(c % n)];
    means.push_back(s / n);
  }
  double m = 0, var = 0;
  for (double x : means) m += x;
  m /= double(means.size());
  for (double x : means) var += (x - m) * (x - m);
  return {m, std::sqrt(var / double(means.size()))};
}

SegRegime seg_regime(bool longitudinal, Pretraining p, double overall) {
  SegRegime r;
  r.longitudinal = longitudinal;
  r.pretraining = p;
  r.n_resamples = 1000;
  r.metrics.healthy = {0.9, 0.01};
  r.metrics.ggo = {0.5, 0.02};
  r.metrics.cons = {0.6, 0.03};
  r.metrics.overall = {overall, 0.01};
  r.metrics.overall_macro = {overall - 0.05, 0.01};
  r.metrics.n_patients = 8;
  return r;
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  int n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    if (text.compare(pos, prefix.size(), prefix) == 0) ++n;
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return n;
}

}  // namespace

TEST_CASE("dice score") {
  LabelImage p = LabelImage::Zero(10, 10), g = LabelImage::Zero(10, 10);
  p.block(0, 0, 3, 4).setConstant(2);  // 12 px
  g.block(1, 0, 2, 4).setConstant(2);  // 8 px, all inside p
  g.block(1, 0, 2, 1).setConstant(0);  // now 6 px of overlap
  g.block(5, 5, 1, 2).setConstant(2);  // and 2 px outside
  CHECK((p.array() == 2).count() == 12);
  CHECK((g.array() == 2).count() == 8);
  CHECK(dice_score(p, g, 2) == doctest::Approx(0.6));
  CHECK(dice_score(g, p, 2) == dice_score(p, g, 2));
  CHECK(dice_score(p, p, 2) == 1.0);
  CHECK(dice_score(p, g, 3) == 1.0);

  LabelImage a = LabelImage::Zero(4, 4), b = LabelImage::Zero(4, 4);
  a.block(0, 0, 2, 2).setConstant(1);
  b.block(2, 2, 2, 2).setConstant(1);
  CHECK(dice_score(a, b, 1) == 0.0);
  CHECK(dice_score(a, LabelImage::Zero(4, 4), 1) == 0.0);
}

TEST_CASE("overall dice") {
  LabelImage t = LabelImage::Zero(8, 8);
  t.block(2, 2, 4, 4).setConstant(1);
  const OverallDice perfect = overall_dice(t, t);
  CHECK(perfect.micro == 1.0);
  CHECK(perfect.macro == 1.0);

  // GGO with Dice 0.6 and CONS with Dice 1.0, both 10 truth px; healthy absent.
  LabelImage truth = LabelImage::Zero(10, 10), pred = LabelImage::Zero(10, 10);
  truth.block(0, 0, 2, 5).setConstant(2);
  pred.block(0, 0, 1, 5).setConstant(2);
  pred.block(1, 0, 1, 1).setConstant(2);
  pred.block(9, 0, 1, 4).setConstant(2);
  truth.block(5, 0, 2, 5).setConstant(3);
  pred.block(5, 0, 2, 5).setConstant(3);
  CHECK(dice_score(pred, truth, 2) == doctest::Approx(0.6));
  CHECK(dice_score(pred, truth, 3) == 1.0);
  DiceCounts d;
  d.add(pred, truth);
  CHECK(d.macro(true) == doctest::Approx(0.8));
  CHECK(d.macro(false) == doctest::Approx((1.0 + 0.6 + 1.0) / 3));
  CHECK(d.micro() == doctest::Approx(2.0 * 16 / (20 + 20)));
  CHECK(overall_dice(pred, truth).micro == doctest::Approx(d.micro()));
}

TEST_CASE("pooled dice counts match pixel counting") {
  Rng rng(1);
  DiceCounts pooled;
  std::array<double, 4> inter{}, ps{}, gs{};
  for (int k = 0; k < 5; ++k) {
    LabelImage p(16, 16), g(16, 16);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = std::uint8_t(uniform_int(rng, 0, 3));
      g.data()[i] = std::uint8_t(uniform_int(rng, 0, 3));
      const int a = p.data()[i], b = g.data()[i];
      ps[a] += 1, gs[b] += 1;
      if (a == b) inter[a] += 1;
    }
    pooled.add(p, g);
  }
  for (int c = 1; c <= 3; ++c) CHECK(pooled.dice(c) == doctest::Approx(2 * inter[c] / (ps[c] + gs[c])));
}

TEST_CASE("roc auc") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(*roc_auc(s, y) == doctest::Approx(0.75));
  CHECK(*roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
  CHECK(*roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y) == 0.5);
  CHECK_FALSE(roc_auc(s, std::vector<std::uint8_t>{1, 1, 1, 1}));

  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = uniform_int(rng, 2, 50);
    std::vector<double> sc(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> lab(static_cast<std::size_t>(n)), flip(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      sc[std::size_t(i)] = double(uniform_int(rng, 0, 10)) / 10.0;  // plenty of ties
      lab[std::size_t(i)] = std::uint8_t(uniform_int(rng, 0, 1));
      flip[std::size_t(i)] = std::uint8_t(1 - lab[std::size_t(i)]);
    }
    const auto a = roc_auc(sc, lab);
    const bool both = std::count(lab.begin(), lab.end(), 1) > 0 && std::count(lab.begin(), lab.end(), 0) > 0;
    REQUIRE(a.has_value() == both);
    if (!both) continue;
    CHECK(*a == auc_oracle(sc, lab));
    CHECK(std::abs(*a + *roc_auc(sc, flip) - 1.0) <= 1e-12);
  }
}

TEST_CASE("accuracy") {
  const std::vector<double> s{0.5, 0.49, 0.9, 0.1};
  CHECK(accuracy(s, std::vector<std::uint8_t>{1, 0, 1, 0}) == 1.0);
  CHECK(accuracy(s, std::vector<std::uint8_t>{0, 0, 1, 0}) == 0.75);

  ClassificationScores sc;
  // 1000 slices, GGO right on 670, CONS right on 740.
  for (int i = 0; i < 1000; ++i) sc.add(i < 670 ? 0.9 : 0.1, i < 740 ? 0.8 : 0.2, {true, true});
  const ClassificationMetrics m = classification_metrics(sc);
  CHECK(m.accuracy_ggo == doctest::Approx(0.670));
  CHECK(m.accuracy_cons == doctest::Approx(0.740));
  CHECK(m.accuracy_overall == doctest::Approx(0.705));
  CHECK_FALSE(m.auc);
}

TEST_CASE("patient bootstrap") {
  Rng rng(3);
  const std::vector<double> same{0.7, 0.7, 0.7};
  const BootstrapResult c = bootstrap_mean(same, 500, rng);
  CHECK(c.mean == doctest::Approx(0.7));
  CHECK(c.std == 0.0);

  const std::vector<double> two{0.0, 1.0};
  const BootstrapResult exact = exhaustive_bootstrap(two);
  CHECK(exact.mean == 0.5);
  CHECK(exact.std == doctest::Approx(std::sqrt(1.0 / 8.0)));
  const int n = 10000;
  Rng r1(4), r2(4);
  const BootstrapResult b = bootstrap_mean(two, n, r1);
  CHECK(std::abs(b.mean - exact.mean) <= 3 * exact.std / std::sqrt(double(n)));
  CHECK(b.std == doctest::Approx(exact.std).epsilon(0.02));
  const BootstrapResult again = bootstrap_mean(two, n, r2);
  CHECK(again.mean == b.mean);
  CHECK(again.std == b.std);

  const std::vector<double> three{0.2, 0.5, 0.9};
  Rng r3(5);
  const BootstrapResult e3 = exhaustive_bootstrap(three), b3 = bootstrap_mean(three, n, r3);
  CHECK(std::abs(b3.mean - e3.mean) <= 3 * e3.std / std::sqrt(double(n)));

  CHECK_THROWS_AS(bootstrap_mean(std::vector<double>{0.5}, 10, rng), InputError);
}

TEST_CASE("overlays and panels") {
  const Image2D gray = Image2D::Constant(8, 8, 0.5f);
  LabelImage l = LabelImage::Zero(8, 8);
  l(1, 1) = 1, l(2, 2) = 2, l(3, 3) = 3;
  const RgbImage o = overlay(gray, l);
  const Rgb cons = o.at(3, 3), healthy = o.at(1, 1), ggo = o.at(2, 2), bg = o.at(0, 0);
  CHECK((cons.g > cons.r && cons.g > cons.b));
  CHECK((healthy.b > healthy.r && healthy.b > healthy.g));
  CHECK((ggo.r > ggo.g && ggo.r > ggo.b));
  CHECK((bg.r == bg.g && bg.g == bg.b));

  LongitudinalSlicePair pair;
  pair.reference = gray;
  pair.target = Image2D::Constant(8, 8, 0.25f);
  const RgbImage panel = qualitative_panel(pair, LabelImage::Zero(8, 8), l);
  CHECK(panel.rows == 8);
  CHECK(panel.cols == 4 * 8 + 3 * 2);
  for (int y = 0; y < 8; ++y)
    for (int x = 3 * 10; x < 3 * 10 + 8; ++x) {
      const Rgb v = panel.at(y, x);
      CHECK((v.r == v.g && v.g == v.b));
    }
  CHECK_FALSE(panel.at(3, 2 * 10 + 3).r == panel.at(3, 2 * 10 + 3).g);

  test::TempDir dir;
  render_qualitative(pair, l, l, dir / "a.png");
  render_qualitative(pair, l, l, dir / "b.png");
  CHECK(hash_file(dir / "a.png") == hash_file(dir / "b.png"));
  CHECK(std::filesystem::file_size(dir / "a.png") > 8);
  CHECK_THROWS_AS(render_qualitative(pair, l, LabelImage::Zero(4, 4), dir / "c.png"), InputError);
}

TEST_CASE("report tables") {
  SegReport seg;
  double v = 0.60;
  for (bool longitudinal : {false, true})
    for (Pretraining p : {Pretraining::none, Pretraining::black, Pretraining::disorder})
      seg.regimes.push_back(seg_regime(longitudinal, p, v += 0.01));
  const std::string md = segmentation_table_markdown(seg);
  CHECK(count_lines_starting(md, "| No pretraining") == 2);
  CHECK(count_lines_starting(md, "| Black patches") == 2);
  CHECK(count_lines_starting(md, "| Context disordering") == 2);
  CHECK(md.find("**0.660 ± 0.010**") != std::string::npos);
  CHECK(md.find("**0.630 ± 0.010**") != std::string::npos);
  const std::string csv = segmentation_table_csv(seg);
  CHECK(count_lines_starting(csv, "Static,") == 3);
  CHECK(count_lines_starting(csv, "Longitudinal,") == 3);

  ClsReport cls;
  ClsRegime a;
  a.pretraining = Pretraining::none;
  a.metrics.auc = MeanStd{0.8, 0.02};
  a.metrics.accuracy_overall = {0.7, 0.02};
  ClsRegime b = a;
  b.pretraining = Pretraining::disorder;
  b.metrics.auc = MeanStd{0.85, 0.02};
  cls.regimes = {a, b};
  const std::string cmd = classification_table_markdown(cls);
  CHECK(count_lines_starting(cmd, "| No pretraining") == 1);
  CHECK(count_lines_starting(cmd, "| Context disordering") == 1);
  CHECK(cmd.find("**0.850 ± 0.020**") != std::string::npos);
  CHECK(cmd.find("Accuracy (Overall)") != std::string::npos);
  CHECK(count_lines_starting(classification_table_csv(cls), "No pretraining,0.800000,0.020000") == 1);

  SegReport one;
  one.regimes.push_back(seg_regime(true, Pretraining::disorder, 0.7));
  const std::string single = segmentation_table_markdown(one);
  CHECK(single.find("**0.") == std::string::npos);
  CHECK(count_lines_starting(single, "| No pretraining | absent") == 2);
  CHECK(count_lines_starting(segmentation_table_csv(one), "Static,No pretraining,,") == 1);
}

TEST_CASE("reports from run directories") {
  test::TempDir runs;
  std::vector<std::filesystem::path> dirs;
  for (auto [longitudinal, p] : {std::pair{true, Pretraining::none}, std::pair{true, Pretraining::disorder}}) {
    const auto d = runs / (std::string("seg_") + to_string(p));
    std::filesystem::create_directories(d);
    std::ofstream(d / kEvaluationFile) << nlohmann::json(seg_regime(longitudinal, p, 0.7)).dump();
    dirs.push_back(d);
  }
  const auto [seg, cls] = collect_reports(dirs);
  CHECK(seg.regimes.size() == 2);
  CHECK(seg.find(true, Pretraining::disorder));
  CHECK_FALSE(seg.find(false, Pretraining::disorder));
  CHECK(cls.regimes.empty());
  const auto written = write_reports(seg, cls, runs / "report");
  CHECK(written.size() == 3);
  for (const auto& f : written) CHECK(std::filesystem::exists(f));
  CHECK_THROWS_AS(collect_reports({runs / "missing"}), IoError);
}

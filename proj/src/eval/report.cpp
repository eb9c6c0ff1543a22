#include "lss/eval/report.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lss/core/error.hpp"
#include "lss/eval/metrics.hpp"

namespace lss {

namespace fs = std::filesystem;

std::string to_string(Pretraining p) {
  switch (p) {
    case Pretraining::none: return "none";
    case Pretraining::black: return "black";
    case Pretraining::disorder: return "disorder";
  }
  return "?";
}

Pretraining pretraining_from_string(const std::string& s) {
  if (s == "none") return Pretraining::none;
  if (s == "black") return Pretraining::black;
  if (s == "disorder") return Pretraining::disorder;
  throw InputError("unknown pretraining \"" + s + "\"");
}

std::string row_label(Pretraining p) {
  switch (p) {
    case Pretraining::none: return "No pretraining";
    case Pretraining::black: return "Black patches";
    case Pretraining::disorder: return "Context disordering";
  }
  return "?";
}

namespace {

struct Groups {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> members;
};

Groups group_by_patient(const std::vector<LongitudinalSlicePair>& slices) {
  Groups g;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    auto [it, inserted] = index.emplace(slices[i].patient_id, g.ids.size());
    if (inserted) {
      g.ids.push_back(slices[i].patient_id);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

MeanStd to_mean_std(const BootstrapResult& b) { return {b.mean, b.std}; }

nlohmann::json ms_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

MeanStd ms_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

std::string fmt(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", m.mean, m.std);
  return buf;
}

std::string csv_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

constexpr std::array<Pretraining, 3> kSegRows{Pretraining::none, Pretraining::black, Pretraining::disorder};
constexpr std::array<Pretraining, 2> kClsRows{Pretraining::none, Pretraining::disorder};

/// Markdown cells for one table section; per column, the best present value
/// is bolded when at least two rows are present.
std::vector<std::vector<std::string>> section_cells(const std::vector<std::optional<std::vector<MeanStd>>>& rows,
                                                    std::size_t columns) {
  std::vector<std::vector<std::string>> cells(rows.size(), std::vector<std::string>(columns, "absent"));
  std::size_t present = 0;
  for (const auto& r : rows) present += r.has_value();
  for (std::size_t c = 0; c < columns; ++c) {
    double best = -1.0;
    for (const auto& r : rows)
      if (r) best = std::max(best, (*r)[c].mean);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i]) continue;
      const MeanStd& v = (*rows[i])[c];
      if (v.mean < 0) {
        cells[i][c] = "n/a";
        continue;
      }
      const bool bold = present >= 2 && v.mean == best;
      cells[i][c] = bold ? "**" + fmt(v) + "**" : fmt(v);
    }
  }
  return cells;
}

std::vector<MeanStd> seg_columns(const SegMetrics& m) { return {m.healthy, m.ggo, m.cons, m.overall}; }

std::vector<MeanStd> cls_columns(const ClsMetrics& m) {
  return {m.auc.value_or(MeanStd{-1.0, 0.0}), m.accuracy_overall, m.accuracy_ggo, m.accuracy_cons};
}

}  // namespace

SegMetrics aggregate_segmentation(const std::vector<LabelImage>& pred, const std::vector<LongitudinalSlicePair>& slices,
                                  int n_resamples, Rng& rng) {
  if (pred.size() != slices.size()) throw InputError("aggregate: prediction count differs from slice count");
  const Groups g = group_by_patient(slices);
  std::vector<DiceCounts> per_patient(g.ids.size());
  for (std::size_t p = 0; p < g.ids.size(); ++p)
    for (std::size_t i : g.members[p]) {
      if (!slices[i].target_seg) throw InputError("aggregate: slice without segmentation");
      per_patient[p].add(pred[i], *slices[i].target_seg);
    }
  const Rng start = rng;
  auto column = [&](const std::function<double(const DiceCounts&)>& f) {
    std::vector<double> values;
    for (const auto& d : per_patient) values.push_back(f(d));
    Rng r = start;
    return to_mean_std(bootstrap_mean(values, n_resamples, r));
  };
  SegMetrics m;
  m.healthy = column([](const DiceCounts& d) { return d.dice(1); });
  m.ggo = column([](const DiceCounts& d) { return d.dice(2); });
  m.cons = column([](const DiceCounts& d) { return d.dice(3); });
  m.overall = column([](const DiceCounts& d) { return d.micro(); });
  m.overall_macro = column([](const DiceCounts& d) { return d.macro(); });
  m.n_patients = int(g.ids.size());
  m.n_slices = int(slices.size());
  rng.discard(1);
  return m;
}

ClsMetrics aggregate_classification(const std::vector<std::array<double, 2>>& scores,
                                    const std::vector<LongitudinalSlicePair>& slices, int n_resamples, Rng& rng) {
  if (scores.size() != slices.size()) throw InputError("aggregate: score count differs from slice count");
  const Groups g = group_by_patient(slices);
  auto pooled = [&](std::span<const int> idx) {
    ClassificationScores s;
    for (int p : idx)
      for (std::size_t i : g.members[std::size_t(p)]) {
        if (!slices[i].target_labels) throw InputError("aggregate: slice without pathology labels");
        s.add(scores[i][0], scores[i][1], *slices[i].target_labels);
      }
    return classification_metrics(s);
  };
  const Rng start = rng;
  auto column = [&](const std::function<std::optional<double>(const ClassificationMetrics&)>& f) {
    Rng r = start;
    return to_mean_std(bootstrap_ci(
        int(g.ids.size()), [&](std::span<const int> idx) { return f(pooled(idx)); }, n_resamples, r));
  };
  ClsMetrics m;
  try {
    m.auc = column([](const ClassificationMetrics& c) { return c.auc; });
  } catch (const InputError&) {
    m.auc.reset();  // a single label class in every resample
  }
  m.accuracy_overall = column([](const ClassificationMetrics& c) { return c.accuracy_overall; });
  m.accuracy_ggo = column([](const ClassificationMetrics& c) { return c.accuracy_ggo; });
  m.accuracy_cons = column([](const ClassificationMetrics& c) { return c.accuracy_cons; });
  m.n_patients = int(g.ids.size());
  m.n_slices = int(slices.size());
  rng.discard(1);
  return m;
}

void to_json(nlohmann::json& j, const SegRegime& r) {
  const auto& m = r.metrics;
  j = {{"kind", "seg"},
       {"longitudinal", r.longitudinal},
       {"pretraining", to_string(r.pretraining)},
       {"split", r.split},
       {"n_resamples", r.n_resamples},
       {"n_patients", m.n_patients},
       {"n_slices", m.n_slices},
       {"metrics",
        {{"healthy", ms_json(m.healthy)},
         {"ggo", ms_json(m.ggo)},
         {"cons", ms_json(m.cons)},
         {"overall_micro", ms_json(m.overall)},
         {"overall_macro", ms_json(m.overall_macro)}}}};
}

void to_json(nlohmann::json& j, const ClsRegime& r) {
  const auto& m = r.metrics;
  j = {{"kind", "cls"},
       {"longitudinal", r.longitudinal},
       {"pretraining", to_string(r.pretraining)},
       {"split", r.split},
       {"n_resamples", r.n_resamples},
       {"n_patients", m.n_patients},
       {"n_slices", m.n_slices},
       {"metrics",
        {{"auc", m.auc ? ms_json(*m.auc) : nlohmann::json(nullptr)},
         {"accuracy_overall", ms_json(m.accuracy_overall)},
         {"accuracy_ggo", ms_json(m.accuracy_ggo)},
         {"accuracy_cons", ms_json(m.accuracy_cons)}}}};
}

const SegRegime* SegReport::find(bool longitudinal, Pretraining p) const {
  for (const auto& r : regimes)
    if (r.longitudinal == longitudinal && r.pretraining == p) return &r;
  return nullptr;
}

const ClsRegime* ClsReport::find(bool longitudinal, Pretraining p) const {
  for (const auto& r : regimes)
    if (r.longitudinal == longitudinal && r.pretraining == p) return &r;
  return nullptr;
}

std::pair<SegReport, ClsReport> collect_reports(const std::vector<fs::path>& run_dirs) {
  SegReport seg;
  ClsReport cls;
  for (const auto& dir : run_dirs) {
    const fs::path path = dir / kEvaluationFile;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string() + " (run `lss evaluate` for this run first)");
    try {
      const auto j = nlohmann::json::parse(in);
      const bool longitudinal = j.at("longitudinal").get<bool>();
      const Pretraining p = pretraining_from_string(j.at("pretraining").get<std::string>());
      const auto& m = j.at("metrics");
      if (j.at("kind") == "seg") {
        SegRegime r{longitudinal, p, j.at("split").get<std::string>(), j.at("n_resamples").get<int>(), {}};
        r.metrics = {ms_from(m.at("healthy")),       ms_from(m.at("ggo")),
                     ms_from(m.at("cons")),          ms_from(m.at("overall_micro")),
                     ms_from(m.at("overall_macro")), j.at("n_patients").get<int>(),
                     j.at("n_slices").get<int>()};
        std::erase_if(seg.regimes, [&](const SegRegime& o) { return o.longitudinal == longitudinal && o.pretraining == p; });
        seg.regimes.push_back(r);
      } else if (j.at("kind") == "cls") {
        ClsRegime r{longitudinal, p, j.at("split").get<std::string>(), j.at("n_resamples").get<int>(), {}};
        if (!m.at("auc").is_null()) r.metrics.auc = ms_from(m.at("auc"));
        r.metrics.accuracy_overall = ms_from(m.at("accuracy_overall"));
        r.metrics.accuracy_ggo = ms_from(m.at("accuracy_ggo"));
        r.metrics.accuracy_cons = ms_from(m.at("accuracy_cons"));
        r.metrics.n_patients = j.at("n_patients").get<int>();
        r.metrics.n_slices = j.at("n_slices").get<int>();
        std::erase_if(cls.regimes, [&](const ClsRegime& o) { return o.longitudinal == longitudinal && o.pretraining == p; });
        cls.regimes.push_back(r);
      } else {
        throw InputError(path.string() + ": unknown kind");
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ": " + e.what());
    }
  }
  return {seg, cls};
}

std::string segmentation_table_markdown(const SegReport& r) {
  std::ostringstream out;
  out << "| Segmentation | Healthy | GGO | CONS | Overall |\n|---|---|---|---|---|\n";
  for (const bool longitudinal : {false, true}) {
    out << "| **" << (longitudinal ? "Longitudinal" : "Static") << "** | | | | |\n";
    std::vector<std::optional<std::vector<MeanStd>>> rows;
    for (Pretraining p : kSegRows) {
      const SegRegime* reg = r.find(longitudinal, p);
      rows.push_back(reg ? std::optional(seg_columns(reg->metrics)) : std::nullopt);
    }
    const auto cells = section_cells(rows, 4);
    for (std::size_t i = 0; i < kSegRows.size(); ++i) {
      out << "| " << row_label(kSegRows[i]);
      for (const auto& c : cells[i]) out << " | " << c;
      out << " |\n";
    }
  }
  return out.str();
}

std::string classification_table_markdown(const ClsReport& r) {
  std::ostringstream out;
  out << "| Classification | AUC | Accuracy (Overall) | Accuracy (GGO) | Accuracy (CONS) |\n"
         "|---|---|---|---|---|\n";
  std::vector<std::optional<std::vector<MeanStd>>> rows;
  for (Pretraining p : kClsRows) {
    const ClsRegime* reg = r.find(true, p);
    rows.push_back(reg ? std::optional(cls_columns(reg->metrics)) : std::nullopt);
  }
  const auto cells = section_cells(rows, 4);
  for (std::size_t i = 0; i < kClsRows.size(); ++i) {
    out << "| " << row_label(kClsRows[i]);
    for (const auto& c : cells[i]) out << " | " << c;
    out << " |\n";
  }
  return out.str();
}

std::string segmentation_table_csv(const SegReport& r) {
  std::ostringstream out;
  out << "section,regime,healthy_mean,healthy_std,ggo_mean,ggo_std,cons_mean,cons_std,overall_mean,overall_std,"
         "overall_macro_mean,overall_macro_std,n_patients\n";
  for (const bool longitudinal : {false, true})
    for (Pretraining p : kSegRows) {
      out << (longitudinal ? "Longitudinal" : "Static") << "," << row_label(p);
      const SegRegime* reg = r.find(longitudinal, p);
      if (!reg) {
        out << ",,,,,,,,,,,\n";
        continue;
      }
      const auto& m = reg->metrics;
      for (const MeanStd& v : {m.healthy, m.ggo, m.cons, m.overall, m.overall_macro})
        out << "," << csv_num(v.mean) << "," << csv_num(v.std);
      out << "," << m.n_patients << "\n";
    }
  return out.str();
}

std::string classification_table_csv(const ClsReport& r) {
  std::ostringstream out;
  out << "regime,auc_mean,auc_std,accuracy_overall_mean,accuracy_overall_std,accuracy_ggo_mean,accuracy_ggo_std,"
         "accuracy_cons_mean,accuracy_cons_std,n_patients\n";
  for (Pretraining p : kClsRows) {
    out << row_label(p);
    const ClsRegime* reg = r.find(true, p);
    if (!reg) {
      out << ",,,,,,,,,\n";
      continue;
    }
    const auto& m = reg->metrics;
    if (m.auc)
      out << "," << csv_num(m.auc->mean) << "," << csv_num(m.auc->std);
    else
      out << ",,";
    for (const MeanStd& v : {m.accuracy_overall, m.accuracy_ggo, m.accuracy_cons})
      out << "," << csv_num(v.mean) << "," << csv_num(v.std);
    out << "," << m.n_patients << "\n";
  }
  return out.str();
}

std::vector<fs::path> write_reports(const SegReport& seg, const ClsReport& cls, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ostringstream md;
  md << "# Results\n\n";
  std::string split = "test";
  int resamples = 0;
  for (const auto& r : seg.regimes) split = r.split, resamples = r.n_resamples;
  for (const auto& r : cls.regimes) split = r.split, resamples = r.n_resamples;
  md << "Evaluated on the held-out `" << split << "` split (patients disjoint from training and validation). "
     << "Metrics are computed per slice, pooled per patient, then averaged over patients.\n\n";
  md << "## Segmentation (Dice)\n\n" << segmentation_table_markdown(seg) << "\n";
  md << "Overall is the micro Dice pooled over healthy, GGO and CONS pixels. Macro Dice (mean of the three "
        "class scores):\n\n| Regime | Static | Longitudinal |\n|---|---|---|\n";
  for (Pretraining p : kSegRows) {
    md << "| " << row_label(p);
    for (const bool longitudinal : {false, true}) {
      const SegRegime* r = seg.find(longitudinal, p);
      md << " | " << (r ? fmt(r->metrics.overall_macro) : "absent");
    }
    md << " |\n";
  }
  md << "\n## Classification (longitudinal)\n\n" << classification_table_markdown(cls) << "\n";
  md << "Accuracy (Overall) is the mean of the GGO and CONS accuracies at threshold 0.5; AUC is the mean of the two "
        "per-label AUCs.\n\n";
  md << "Values are mean ± standard deviation over " << resamples
     << " patient-level bootstrap resamples. Bold marks the best value per column within a section; "
        "absent rows were not run.\n";
  const std::vector<fs::path> paths{out_dir / "report.md", out_dir / "table1_segmentation.csv",
                                    out_dir / "table2_classification.csv"};
  const std::string contents[] = {md.str(), segmentation_table_csv(seg), classification_table_csv(cls)};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::ofstream out(paths[i]);
    if (!out) throw IoError("cannot write " + paths[i].string());
    out << contents[i];
  }
  return paths;
}

}  // namespace lss

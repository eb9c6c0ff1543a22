#include "lss/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "lss/core/hash.hpp"
#include "lss/core/volume_io.hpp"
#include "lss/eval/render.hpp"
#include "lss/eval/report.hpp"
#include "lss/registration/transform_io.hpp"

namespace lss {

namespace fs = std::filesystem;

std::string run_id(const nlohmann::json& resolved) { return hash_string(resolved.dump()).substr(0, 12); }

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

std::string volume_hash(const fs::path& header) {
  Fnv1a h;
  h.update(hash_file(header));
  h.update(hash_file(raw_path_for(header)));
  return h.hex();
}

double mask_dice(const BinaryMask3D& a, const BinaryMask3D& b) {
  std::int64_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.voxels().size(); ++i) {
    const bool x = a.voxels()[i] != 0, y = b.voxels()[i] != 0;
    inter += x && y;
    total += x + y;
  }
  return total == 0 ? 1.0 : 2.0 * double(inter) / double(total);
}

/// Crop box shared by all timepoints of one patient, normalized volumes and
/// cropped masks, computed on first use.
struct PreparedPatient {
  std::vector<Volume3D> image;
  std::vector<BinaryMask3D> lung;
  std::vector<std::optional<SegMask3D>> seg;
};

PreparedPatient prepare_patient(const DatasetManifest& m, const PatientRecord& p, const PreprocessSection& s) {
  PreparedPatient out;
  std::vector<BinaryMask3D> lungs;
  for (const auto& t : p.timepoints) lungs.push_back(load_mask(m.resolve(t.lung_mask)));
  CropBox box = bounding_box(lungs[0]);
  for (const auto& l : lungs) box = union_box(box, bounding_box(l));
  box = expand(box, s.crop_margin, lungs[0].shape());
  for (std::size_t i = 0; i < p.timepoints.size(); ++i) {
    const auto& t = p.timepoints[i];
    const Volume3D image = load_volume(m.resolve(t.volume));
    if (!(image.shape() == lungs[i].shape())) throw InputError("preprocess: " + p.id + " image/mask shape mismatch");
    out.image.push_back(min_max_normalize(crop(image, box), s.clip));
    out.lung.push_back(crop(lungs[i], box));
    out.seg.push_back(t.seg_mask ? std::optional(crop(load_mask(m.resolve(*t.seg_mask)), box)) : std::nullopt);
  }
  return out;
}

const CachedPair* find_cached(const std::optional<PairCache>& cache, const std::string& id, int ref, int tar) {
  if (!cache) return nullptr;
  for (const auto& p : cache->pairs)
    if (p.patient_id == id && p.ref_time == ref && p.tar_time == tar) return &p;
  return nullptr;
}

bool cached_files_exist(const PairCache& cache, const CachedPair& p) {
  for (const fs::path& f : {p.reference, p.target, p.target_lung, p.transform})
    if (!fs::exists(cache.resolve(f))) return false;
  return p.target_seg.empty() || fs::exists(cache.resolve(p.target_seg));
}

PairCache require_cache(const RunConfig& cfg) {
  const fs::path dir = cfg.resolve(cfg.preprocess.cache_dir);
  if (!fs::exists(dir / kPairCacheFile))
    throw IoError("no preprocessed pairs in " + dir.string() + "; run `lss preprocess` first");
  return load_pair_cache(dir);
}

std::vector<fs::path> list_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "files.json") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

void write_file_manifest(const fs::path& dir) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : list_files(dir)) files.push_back({{"path", f.generic_string()}, {"hash", hash_file(dir / f)}});
  write_json({{"files", files}}, dir / "files.json");
}

std::string stage_name(TrainStage s) {
  switch (s) {
    case TrainStage::pretrain: return "pretrain";
    case TrainStage::finetune_seg: return "finetune-seg";
    case TrainStage::finetune_cls: return "finetune-cls";
  }
  return "?";
}

}  // namespace

fs::path synth_generate(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.resolve(cfg.synth.out_dir);
  const DatasetManifest m = generate_dataset(cfg.synth.spec, out);
  int timepoints = 0;
  for (const auto& p : m.patients) timepoints += int(p.timepoints.size());
  const auto counts = split_counts(cfg.synth.spec.n_patients, cfg.synth.spec.ratios);
  log << "synth-generate: " << m.patients.size() << " patients (" << counts[0] << " train, " << counts[1] << " val, "
      << counts[2] << " test), " << timepoints << " volumes -> " << out.string() << "\n";
  return out / "manifest.json";
}

PreprocessSummary preprocess(const RunConfig& cfg, std::ostream& log) {
  const fs::path manifest_path = cfg.resolve(cfg.preprocess.manifest);
  if (!fs::exists(manifest_path))
    throw IoError("manifest " + manifest_path.string() + " not found; run `lss synth-generate` first");
  const DatasetManifest m = load_manifest(manifest_path);
  validate(m, true);
  const fs::path dir = cfg.resolve(cfg.preprocess.cache_dir);
  std::optional<PairCache> previous;
  if (fs::exists(dir / kPairCacheFile)) {
    try {
      previous = load_pair_cache(dir);
    } catch (const Error&) {
      previous.reset();
    }
  }
  const auto& s = cfg.preprocess;
  const auto& r = s.registration;
  const std::string settings =
      nlohmann::json{{"crop_margin", s.crop_margin},
                     {"clip", s.clip ? nlohmann::json{s.clip->first, s.clip->second} : nlohmann::json(nullptr)},
                     {"registration",
                      {r.levels, r.control_spacing, r.step_size, r.max_iterations, r.bending_weight, r.tolerance,
                       r.smoothing_sigma}}}
          .dump();

  PreprocessSummary summary;
  summary.cache_dir = dir;
  PairCache cache;
  cache.root = dir;
  for (const auto& p : m.patients) {
    std::vector<std::string> image_hash, lung_hash, seg_hash;
    Fnv1a patient_hash;
    patient_hash.update(settings);
    for (const auto& t : p.timepoints) {
      image_hash.push_back(volume_hash(m.resolve(t.volume)));
      lung_hash.push_back(volume_hash(m.resolve(t.lung_mask)));
      seg_hash.push_back(t.seg_mask ? volume_hash(m.resolve(*t.seg_mask)) : "");
      patient_hash.update(lung_hash.back());  // the crop box depends on every lung mask
    }
    std::optional<PreparedPatient> prepared;
    for (const auto& [i, j] : enumerate_pairs(m, p.id)) {
      Fnv1a h;
      h.update(patient_hash.hex());
      h.update(image_hash[std::size_t(i)]);
      h.update(image_hash[std::size_t(j)]);
      h.update(seg_hash[std::size_t(j)]);
      const std::string source = h.hex();
      ++summary.pairs;
      const int ti = p.timepoints[std::size_t(i)].ordinal, tj = p.timepoints[std::size_t(j)].ordinal;
      if (const CachedPair* c = find_cached(previous, p.id, ti, tj);
          c && c->source_hash == source && c->split == p.split && cached_files_exist(*previous, *c)) {
        cache.pairs.push_back(*c);
        ++summary.cached;
        continue;
      }
      if (!prepared) prepared = prepare_patient(m, p, s);
      const std::string tag = "t" + std::to_string(ti) + "_to_t" + std::to_string(tj);
      const fs::path rel = p.id;
      CachedPair e;
      e.patient_id = p.id;
      e.split = p.split;
      e.ref_time = ti;
      e.tar_time = tj;
      e.reference = rel / (tag + "_reference.vol.json");
      e.target = rel / ("t" + std::to_string(tj) + "_target.vol.json");
      e.target_lung = rel / ("t" + std::to_string(tj) + "_lung.vol.json");
      e.transform = rel / (tag + ".bspline.json");
      e.source_hash = source;
      const RegistrationResult reg =
          register_masks(prepared->lung[std::size_t(i)], prepared->lung[std::size_t(j)], r);
      const Volume3D registered = apply_transform(prepared->image[std::size_t(i)], reg.transform, Interpolation::linear);
      const BinaryMask3D warped_lung = apply_transform(prepared->lung[std::size_t(i)], reg.transform, Interpolation::nearest);
      e.mask_dice_before = mask_dice(prepared->lung[std::size_t(i)], prepared->lung[std::size_t(j)]);
      e.mask_dice_after = mask_dice(warped_lung, prepared->lung[std::size_t(j)]);
      e.warning = reg.warning;
      save_volume(registered, dir / e.reference);
      save_volume(prepared->image[std::size_t(j)], dir / e.target);
      save_mask(prepared->lung[std::size_t(j)], dir / e.target_lung);
      if (prepared->seg[std::size_t(j)]) {
        e.target_seg = rel / ("t" + std::to_string(tj) + "_seg.vol.json");
        save_mask(*prepared->seg[std::size_t(j)], dir / e.target_seg);
      }
      save_transform(reg.transform, dir / e.transform);
      if (!e.warning.empty()) {
        summary.warnings.push_back(p.id + " " + tag + ": " + e.warning);
        log << "warning: " << summary.warnings.back() << "\n";
      }
      log << "  " << p.id << " " << tag << ": lung Dice " << e.mask_dice_before << " -> " << e.mask_dice_after << "\n";
      cache.pairs.push_back(std::move(e));
      ++summary.computed;
    }
  }
  save_pair_cache(cache, dir);
  log << "preprocess: " << summary.pairs << " pairs (" << summary.computed << " computed, " << summary.cached
      << " cached) -> " << dir.string() << "\n";
  return summary;
}

fs::path train_command(const RunConfig& cfg, TrainStage stage, const TrainOverrides& overrides, std::ostream& log) {
  TrainSection section = stage == TrainStage::pretrain ? cfg.pretrain : cfg.finetune;
  TrainConfig tc = section.train;
  if (overrides.task) tc.task = *overrides.task;
  if (stage == TrainStage::finetune_seg) tc.task = TrainTask::seg;
  if (stage == TrainStage::finetune_cls) tc.task = TrainTask::cls;
  if (stage == TrainStage::pretrain && !is_pretext(tc.task))
    throw InputError("pretrain: task must be pretext_black or pretext_disorder");
  if (overrides.longitudinal) tc.longitudinal = *overrides.longitudinal;
  std::optional<fs::path> init;
  if (stage != TrainStage::pretrain) {
    if (section.init) init = cfg.resolve(*section.init);
    if (overrides.init) init = fs::absolute(*overrides.init);
    if (overrides.clear_init) init.reset();
  }
  tc.validate();

  const PairCache cache = require_cache(cfg);
  std::optional<Checkpoint> ckpt;
  nlohmann::json resolved = {{"stage", stage_name(stage)},
                             {"train", tc},
                             {"slices", {{"size", cfg.slices.size}, {"min_lung_fraction", cfg.slices.min_lung_fraction}}},
                             {"data", hash_file(cache.root / kPairCacheFile)},
                             {"init", nullptr}};
  if (init) {
    if (!fs::exists(*init))
      throw IoError("init checkpoint " + init->string() + " not found; run `lss pretrain` first");
    ckpt = load_checkpoint(*init);
    resolved["init"] = {{"path", init->generic_string()}, {"hash", hash_file(checkpoint_payload_path(*init))}};
  }
  const fs::path run_dir = cfg.resolve(cfg.output_dir) / (stage_name(stage) + "-" + run_id(resolved));
  if (fs::exists(run_dir / "best.ckpt.json") && fs::exists(run_dir / "run.json")) {
    log << stage_name(stage) << ": up to date -> " << run_dir.string() << "\n";
    return run_dir;
  }

  const auto train = load_slices(cache, Split::train, cfg.slices);
  const auto val = load_slices(cache, Split::val, cfg.slices);
  log << stage_name(stage) << " [" << to_string(tc.task) << ", " << (tc.longitudinal ? "longitudinal" : "static")
      << (init ? ", init " + init->filename().string() : std::string()) << "]: " << train.size() << " train / "
      << val.size() << " val slices\n";
  auto progress = [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  epoch %3d  train %.5f  val %.5f  metric %.4f  (%.1fs)\n", e.epoch, e.train_loss,
                  e.val_loss, e.val_metric, e.seconds);
    log << buf << std::flush;
  };
  const Checkpoint* init_ptr = ckpt ? &*ckpt : nullptr;
  TrainResult result = stage == TrainStage::pretrain       ? pretrain(tc, train, val, progress)
                       : stage == TrainStage::finetune_seg ? finetune_segmentation(tc, train, val, init_ptr, progress)
                                                           : finetune_classification(tc, train, val, init_ptr, progress);
  fs::create_directories(run_dir);
  write_json(resolved, run_dir / "config.json");
  if (result.transfer)
    write_json({{"copied", result.transfer->copied}, {"initialized", result.transfer->initialized}},
               run_dir / "transfer.json");
  write_train_log(result.log, run_dir);
  save_checkpoint(result.checkpoint, run_dir / "best.ckpt.json");
  log << stage_name(stage) << ": selected epoch " << result.log.selected_epoch << " of " << result.log.epochs.size()
      << " -> " << run_dir.string() << "\n";
  return run_dir;
}

fs::path evaluate_command(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const fs::path ckpt_path = run_dir / "best.ckpt.json";
  if (!fs::exists(ckpt_path))
    throw IoError("no checkpoint in " + run_dir.string() + "; run `lss finetune-seg` or `lss finetune-cls` first");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Head head = ckpt.config.head;
  if (head == Head::restoration)
    throw InputError("evaluate: " + run_dir.string() + " is a pretraining run; evaluate finetuned runs");
  const PairCache cache = require_cache(cfg);
  const nlohmann::json resolved = {{"checkpoint", hash_file(checkpoint_payload_path(ckpt_path))},
                                   {"run", fs::absolute(run_dir).lexically_normal().generic_string()},
                                   {"split", to_string(cfg.evaluate.split)},
                                   {"n_resamples", cfg.evaluate.n_resamples},
                                   {"qualitative", cfg.evaluate.qualitative},
                                   {"seed", cfg.seed},
                                   {"data", hash_file(cache.root / kPairCacheFile)},
                                   {"slices", {{"size", cfg.slices.size}, {"min_lung_fraction", cfg.slices.min_lung_fraction}}}};
  const fs::path out = cfg.resolve(cfg.output_dir) / ("eval-" + run_id(resolved));
  const auto slices = load_slices(cache, cfg.evaluate.split, cfg.slices);
  if (slices.empty()) throw InputError("evaluate: no slices in split " + to_string(cfg.evaluate.split));
  auto net = network_from_checkpoint(ckpt);
  Rng rng(derive_seed(cfg.seed, 0xe7a1));
  nlohmann::json j;
  const Pretraining pre = pretraining_from_string(ckpt.meta.pretraining);
  if (head == Head::segmentation) {
    const auto pred = predict_segmentation(*net, slices, ckpt.meta.longitudinal);
    SegRegime r{ckpt.meta.longitudinal, pre, to_string(cfg.evaluate.split), cfg.evaluate.n_resamples,
                aggregate_segmentation(pred, slices, cfg.evaluate.n_resamples, rng)};
    j = r;
    std::vector<std::size_t> order(slices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto lesion = [&](std::size_t i) { return ((*slices[i].target_seg >= 2).cast<int>()).sum(); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lesion(a) > lesion(b); });
    for (int k = 0; k < cfg.evaluate.qualitative && std::size_t(k) < order.size(); ++k) {
      const auto& s = slices[order[std::size_t(k)]];
      char name[96];
      std::snprintf(name, sizeof name, "%s_t%d-t%d_z%02d.png", s.patient_id.c_str(), s.ref_time, s.tar_time,
                    s.slice_index);
      render_qualitative(s, pred[order[std::size_t(k)]], *s.target_seg, out / "qualitative" / name);
    }
    log << "evaluate: overall Dice " << r.metrics.overall.mean << " ± " << r.metrics.overall.std;
  } else {
    const auto scores = predict_classification(*net, slices, ckpt.meta.longitudinal);
    ClsRegime r{ckpt.meta.longitudinal, pre, to_string(cfg.evaluate.split), cfg.evaluate.n_resamples,
                aggregate_classification(scores, slices, cfg.evaluate.n_resamples, rng)};
    j = r;
    log << "evaluate: overall accuracy " << r.metrics.accuracy_overall.mean << " ± " << r.metrics.accuracy_overall.std;
  }
  j["run_dir"] = fs::absolute(run_dir).lexically_normal().generic_string();
  j["provenance"] = "held-out " + to_string(cfg.evaluate.split) +
                    " split; patients disjoint from the training and validation splits";
  write_json(j, out / kEvaluationFile);
  write_file_manifest(out);
  log << " on " << slices.size() << " " << to_string(cfg.evaluate.split) << " slices -> " << out.string() << "\n";
  return out;
}

fs::path report_command(const RunConfig& cfg, const std::vector<fs::path>& eval_dirs,
                        const std::optional<fs::path>& out_dir, std::ostream& log) {
  std::vector<fs::path> dirs = eval_dirs;
  const fs::path root = cfg.resolve(cfg.output_dir);
  if (dirs.empty() && fs::exists(root)) {
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && e.path().filename().string().rfind("eval-", 0) == 0 &&
          fs::exists(e.path() / kEvaluationFile))
        dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw IoError("no evaluations under " + root.string() + "; run `lss evaluate` first");
  const auto [seg, cls] = collect_reports(dirs);
  const fs::path out = out_dir ? *out_dir : root / "report";
  write_reports(seg, cls, out);
  write_file_manifest(out);
  log << "report: " << seg.regimes.size() << " segmentation and " << cls.regimes.size()
      << " classification regimes -> " << out.string() << "\n";
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Longitudinal self-supervised pretraining pipeline"};
  app.require_subcommand(1);
  std::string config;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    return sub;
  };
  auto* synth = add("synth-generate", "generate the synthetic longitudinal dataset");
  auto* prep = add("preprocess", "crop, normalize and register all past -> future pairs");
  auto* pre = add("pretrain", "restoration pretraining");
  auto* seg = add("finetune-seg", "segmentation finetuning");
  auto* cls = add("finetune-cls", "classification finetuning");
  auto* eval = add("evaluate", "evaluate a finetuned run on the held-out split");
  auto* rep = add("report", "build the comparison tables");

  std::string task, init, run, out;
  bool is_static = false, is_longitudinal = false;
  std::vector<std::string> evals;
  pre->add_option("--task", task, "pretext_black or pretext_disorder");
  for (auto* sub : {pre, seg, cls}) {
    sub->add_flag("--static", is_static, "target slice only");
    sub->add_flag("--longitudinal", is_longitudinal, "reference and target slices");
  }
  for (auto* sub : {seg, cls}) sub->add_option("--init", init, "checkpoint json to start from, or 'none'");
  eval->add_option("--run", run, "finetuning run directory")->required();
  rep->add_option("--eval", evals, "evaluation directories (default: all under the output root)");
  rep->add_option("--out", out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = load_run_config(config);
    std::ostream& log = std::cout;
    if (synth->parsed()) {
      synth_generate(cfg, log);
    } else if (prep->parsed()) {
      preprocess(cfg, log);
    } else if (pre->parsed() || seg->parsed() || cls->parsed()) {
      if (is_static && is_longitudinal) throw InputError("--static and --longitudinal are exclusive");
      TrainOverrides o;
      if (!task.empty()) o.task = task_from_string(task);
      if (is_static) o.longitudinal = false;
      if (is_longitudinal) o.longitudinal = true;
      if (init == "none")
        o.clear_init = true;
      else if (!init.empty())
        o.init = init;
      const TrainStage stage = pre->parsed() ? TrainStage::pretrain
                               : seg->parsed() ? TrainStage::finetune_seg
                                               : TrainStage::finetune_cls;
      std::cout << train_command(cfg, stage, o, log).string() << "\n";
    } else if (eval->parsed()) {
      std::cout << evaluate_command(cfg, run, log).string() << "\n";
    } else if (rep->parsed()) {
      std::vector<fs::path> dirs(evals.begin(), evals.end());
      report_command(cfg, dirs, out.empty() ? std::nullopt : std::optional<fs::path>(out), log);
    }
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace lss

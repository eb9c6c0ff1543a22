#include "lss/cli/config.hpp"

#include <cstdlib>
#include <fstream>

#include "lss/core/json_util.hpp"

namespace lss {

namespace fs = std::filesystem;

namespace {

void parse_synth(const nlohmann::json& j, SynthSection& s, std::uint64_t seed) {
  const std::string ctx = "synth";
  reject_unknown_keys(j, {"out_dir", "n_patients", "timepoints", "ratios", "phantom", "seed"}, ctx);
  if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
  read_if(j, "n_patients", s.spec.n_patients, ctx);
  s.spec.seed = seed;
  read_if(j, "seed", s.spec.seed, ctx);
  if (j.contains("timepoints")) {
    const auto& t = j.at("timepoints");
    if (!t.is_array() || t.size() != 2) throw InputError("synth: 'timepoints' must be [lo, hi]");
    s.spec.timepoint_range = {t.at(0).get<int>(), t.at(1).get<int>()};
  }
  if (j.contains("ratios")) {
    const auto& r = j.at("ratios");
    reject_unknown_keys(r, {"train", "val", "test"}, "synth.ratios");
    read_if(r, "train", s.spec.ratios.train, ctx);
    read_if(r, "val", s.spec.ratios.val, ctx);
    read_if(r, "test", s.spec.ratios.test, ctx);
  }
  if (j.contains("phantom")) j.at("phantom").get_to(s.spec.phantom);
  if (s.spec.n_patients < 1) throw InputError("synth: n_patients must be >= 1");
  if (s.spec.timepoint_range.lo < 2 || s.spec.timepoint_range.hi < s.spec.timepoint_range.lo)
    throw InputError("synth: timepoints must satisfy 2 <= lo <= hi");
  s.spec.ratios.validate();
  s.spec.phantom.validate();
}

void parse_registration(const nlohmann::json& j, RegistrationParams& r) {
  const std::string ctx = "preprocess.registration";
  reject_unknown_keys(j,
                      {"levels", "control_spacing", "step_size", "max_iterations", "bending_weight", "tolerance",
                       "smoothing_sigma"},
                      ctx);
  read_if(j, "levels", r.levels, ctx);
  read_if(j, "control_spacing", r.control_spacing, ctx);
  read_if(j, "step_size", r.step_size, ctx);
  read_if(j, "max_iterations", r.max_iterations, ctx);
  read_if(j, "bending_weight", r.bending_weight, ctx);
  read_if(j, "tolerance", r.tolerance, ctx);
  read_if(j, "smoothing_sigma", r.smoothing_sigma, ctx);
  r.validate();
}

void parse_preprocess(const nlohmann::json& j, PreprocessSection& p) {
  const std::string ctx = "preprocess";
  reject_unknown_keys(j, {"manifest", "cache_dir", "crop_margin", "clip", "registration"}, ctx);
  if (j.contains("manifest")) p.manifest = j.at("manifest").get<std::string>();
  if (j.contains("cache_dir")) p.cache_dir = j.at("cache_dir").get<std::string>();
  read_if(j, "crop_margin", p.crop_margin, ctx);
  if (p.crop_margin < 0) throw InputError("preprocess: crop_margin must be >= 0");
  if (j.contains("clip")) {
    const auto& c = j.at("clip");
    if (c.is_null()) {
      p.clip.reset();
    } else {
      if (!c.is_array() || c.size() != 2) throw InputError("preprocess: 'clip' must be [lo, hi] or null");
      p.clip = ClipRange{c.at(0).get<float>(), c.at(1).get<float>()};
      if (!(p.clip->first < p.clip->second)) throw InputError("preprocess: clip lo must be below hi");
    }
  }
  if (j.contains("registration")) parse_registration(j.at("registration"), p.registration);
}

void parse_slices(const nlohmann::json& j, SliceOptions& s) {
  const std::string ctx = "slices";
  reject_unknown_keys(j, {"size", "min_lung_fraction"}, ctx);
  read_if(j, "size", s.size, ctx);
  read_if(j, "min_lung_fraction", s.min_lung_fraction, ctx);
  if (s.size < 32 || s.size % 32 != 0) throw InputError("slices: size must be a positive multiple of 32");
  if (s.min_lung_fraction < 0 || s.min_lung_fraction >= 1)
    throw InputError("slices: min_lung_fraction must lie in [0, 1)");
}

void parse_train(const nlohmann::json& j, TrainSection& t, const std::string& ctx, std::uint64_t seed) {
  if (!j.is_object()) throw InputError(ctx + ": expected an object");
  nlohmann::json rest = j;
  if (rest.contains("init")) {
    if (!rest.at("init").is_null()) t.init = rest.at("init").get<std::string>();
    rest.erase("init");
  }
  t.train.seed = seed;
  try {
    from_json(rest, t.train);
  } catch (const InputError& e) {
    throw InputError(ctx + "." + e.what());
  }
}

void parse_evaluate(const nlohmann::json& j, EvaluateSection& e) {
  const std::string ctx = "evaluate";
  reject_unknown_keys(j, {"split", "n_resamples", "qualitative"}, ctx);
  if (j.contains("split")) e.split = split_from_string(j.at("split").get<std::string>());
  read_if(j, "n_resamples", e.n_resamples, ctx);
  read_if(j, "qualitative", e.qualitative, ctx);
  if (e.n_resamples < 1) throw InputError("evaluate: n_resamples must be >= 1");
  if (e.qualitative < 0) throw InputError("evaluate: qualitative must be >= 0");
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown_keys(j,
                      {"seed", "output_dir", "backend", "synth", "preprocess", "slices", "pretrain", "finetune",
                       "evaluate"},
                      "config");
  RunConfig c;
  c.base_dir = base_dir;
  try {
    read_if(j, "seed", c.seed, "config");
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("backend")) c.backend = j.at("backend").get<std::string>();
    parse_synth(j.value("synth", nlohmann::json::object()), c.synth, c.seed);
    parse_preprocess(j.value("preprocess", nlohmann::json::object()), c.preprocess);
    parse_slices(j.value("slices", nlohmann::json::object()), c.slices);
    c.pretrain.train.task = TrainTask::pretext_disorder;
    parse_train(j.value("pretrain", nlohmann::json::object()), c.pretrain, "pretrain", c.seed);
    parse_train(j.value("finetune", nlohmann::json::object()), c.finetune, "finetune", c.seed);
    parse_evaluate(j.value("evaluate", nlohmann::json::object()), c.evaluate);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (const char* root = std::getenv("LSS_OUTPUT_ROOT"); root && *root) c.output_dir = fs::absolute(root);
  if (const char* backend = std::getenv("LSS_BACKEND"); backend && *backend) c.backend = backend;
  if (c.backend != "cpu" && c.backend != "auto")
    throw InputError("config: backend \"" + c.backend + "\" is not available (use \"cpu\" or \"auto\")");
  if (!is_pretext(c.pretrain.train.task)) throw InputError("config: pretrain.task must be a pretext task");
  if (is_pretext(c.finetune.train.task)) throw InputError("config: finetune.task must be seg or cls");
  c.pretrain.train.validate();
  c.finetune.train.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, fs::absolute(path).parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json phantom = c.synth.spec.phantom;
  auto train = [](const TrainSection& t) {
    nlohmann::json j = t.train;
    j["init"] = t.init ? nlohmann::json(t.init->generic_string()) : nlohmann::json(nullptr);
    return j;
  };
  const auto& r = c.preprocess.registration;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.generic_string()},
          {"backend", c.backend},
          {"synth",
           {{"out_dir", c.synth.out_dir.generic_string()},
            {"n_patients", c.synth.spec.n_patients},
            {"seed", c.synth.spec.seed},
            {"timepoints", {c.synth.spec.timepoint_range.lo, c.synth.spec.timepoint_range.hi}},
            {"ratios", {{"train", c.synth.spec.ratios.train}, {"val", c.synth.spec.ratios.val}, {"test", c.synth.spec.ratios.test}}},
            {"phantom", phantom}}},
          {"preprocess",
           {{"manifest", c.preprocess.manifest.generic_string()},
            {"cache_dir", c.preprocess.cache_dir.generic_string()},
            {"crop_margin", c.preprocess.crop_margin},
            {"clip", c.preprocess.clip ? nlohmann::json{c.preprocess.clip->first, c.preprocess.clip->second}
                                       : nlohmann::json(nullptr)},
            {"registration",
             {{"levels", r.levels},
              {"control_spacing", r.control_spacing},
              {"step_size", r.step_size},
              {"max_iterations", r.max_iterations},
              {"bending_weight", r.bending_weight},
              {"tolerance", r.tolerance},
              {"smoothing_sigma", r.smoothing_sigma}}}}},
          {"slices", {{"size", c.slices.size}, {"min_lung_fraction", c.slices.min_lung_fraction}}},
          {"pretrain", train(c.pretrain)},
          {"finetune", train(c.finetune)},
          {"evaluate",
           {{"split", to_string(c.evaluate.split)},
            {"n_resamples", c.evaluate.n_resamples},
            {"qualitative", c.evaluate.qualitative}}}};
}

}  // namespace lss

#include "lss/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lss/core/json_util.hpp"
#include "lss/eval/metrics.hpp"
#include "lss/train/data.hpp"
#include "lss/train/losses.hpp"

namespace lss {

using nn::Mode;
using nn::Tensor;
using Net = nn::Tiramisu<float>;

std::string to_string(TrainTask t) {
  switch (t) {
    case TrainTask::pretext_black: return "pretext_black";
    case TrainTask::pretext_disorder: return "pretext_disorder";
    case TrainTask::seg: return "seg";
    case TrainTask::cls: return "cls";
  }
  return "?";
}

TrainTask task_from_string(const std::string& s) {
  if (s == "pretext_black") return TrainTask::pretext_black;
  if (s == "pretext_disorder") return TrainTask::pretext_disorder;
  if (s == "seg") return TrainTask::seg;
  if (s == "cls") return TrainTask::cls;
  throw InputError("train: unknown task \"" + s + "\"");
}

bool is_pretext(TrainTask t) { return t == TrainTask::pretext_black || t == TrainTask::pretext_disorder; }

LayoutConfig AugmentConfig::layout() const {
  LayoutConfig c;
  c.count_min = count_min;
  c.count_max = count_max;
  c.side_min = side_min;
  c.side_max = side_max;
  c.max_attempts = max_attempts;
  return c;
}

void TrainConfig::validate() const {
  if (max_epochs < 0 || batch_size < 2 || patience < 0 || steps_per_epoch < 0 || max_val_slices < 0)
    throw InputError("train: max_epochs, patience, steps_per_epoch and max_val_slices must be >= 0, batch_size >= 2");
  if (adam.lr <= 0 || adam.eps <= 0 || adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1)
    throw InputError("train: invalid Adam hyperparameters");
  if (is_pretext(task) && patience >= epochs()) throw InputError("train: patience must be below max_epochs");
  if (dice_eps <= 0) throw InputError("train: dice_eps must be positive");
  if (augment.count_min < 1 || augment.count_max < augment.count_min || augment.side_min < 1 ||
      augment.side_max < augment.side_min || augment.max_attempts < 1)
    throw InputError("train: invalid augmentation ranges");
  resolved_model().validate();
}

int TrainConfig::epochs() const { return max_epochs > 0 ? max_epochs : is_pretext(task) ? 100 : 30; }

ModelConfig TrainConfig::resolved_model() const {
  ModelConfig m = model;
  m.in_channels = longitudinal ? 2 : 1;
  m.head = is_pretext(task) ? Head::restoration : task == TrainTask::seg ? Head::segmentation : Head::classification;
  return m;
}

void to_json(nlohmann::json& j, const AugmentConfig& a) {
  j = nlohmann::json{{"count_min", a.count_min}, {"count_max", a.count_max},       {"side_min", a.side_min},
                     {"side_max", a.side_max},   {"max_attempts", a.max_attempts}, {"within_lung", a.within_lung}};
}

void from_json(const nlohmann::json& j, AugmentConfig& a) {
  const std::string ctx = "augment";
  reject_unknown_keys(j, {"count_min", "count_max", "side_min", "side_max", "max_attempts", "within_lung"}, ctx);
  read_if(j, "count_min", a.count_min, ctx);
  read_if(j, "count_max", a.count_max, ctx);
  read_if(j, "side_min", a.side_min, ctx);
  read_if(j, "side_max", a.side_max, ctx);
  read_if(j, "max_attempts", a.max_attempts, ctx);
  read_if(j, "within_lung", a.within_lung, ctx);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"task", to_string(c.task)},
                     {"longitudinal", c.longitudinal},
                     {"max_epochs", c.max_epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.adam.lr},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"adam_eps", c.adam.eps},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"masked_patch_mean", c.masked_patch_mean},
                     {"dice_eps", c.dice_eps},
                     {"steps_per_epoch", c.steps_per_epoch},
                     {"max_val_slices", c.max_val_slices},
                     {"augment", c.augment},
                     {"model", c.model}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string ctx = "train";
  reject_unknown_keys(j,
                      {"task", "longitudinal", "max_epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps",
                       "patience", "seed", "masked_patch_mean", "dice_eps", "steps_per_epoch", "max_val_slices",
                       "augment", "model"},
                      ctx);
  if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
  read_if(j, "longitudinal", c.longitudinal, ctx);
  read_if(j, "max_epochs", c.max_epochs, ctx);
  read_if(j, "batch_size", c.batch_size, ctx);
  read_if(j, "lr", c.adam.lr, ctx);
  read_if(j, "beta1", c.adam.beta1, ctx);
  read_if(j, "beta2", c.adam.beta2, ctx);
  read_if(j, "adam_eps", c.adam.eps, ctx);
  read_if(j, "patience", c.patience, ctx);
  read_if(j, "seed", c.seed, ctx);
  read_if(j, "masked_patch_mean", c.masked_patch_mean, ctx);
  read_if(j, "dice_eps", c.dice_eps, ctx);
  read_if(j, "steps_per_epoch", c.steps_per_epoch, ctx);
  read_if(j, "max_val_slices", c.max_val_slices, ctx);
  if (j.contains("augment")) from_json(j.at("augment"), c.augment);
  if (j.contains("model")) from_json(j.at("model"), c.model);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Shuffled mini-batches; either full passes or a fixed number of steps
/// drawn from a running permutation.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch, int steps, std::uint64_t seed) : n_(n), batch_(batch), steps_(steps), rng_(seed) {
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), 0);
    pos_ = n;
  }

  std::vector<std::vector<std::size_t>> epoch() {
    std::vector<std::vector<std::size_t>> out;
    if (steps_ == 0) {
      reshuffle();
      for (std::size_t i = 0; i < n_; i += std::size_t(batch_)) {
        const std::size_t end = std::min(n_, i + std::size_t(batch_));
        if (end - i < 2) break;  // batch statistics need two samples
        out.emplace_back(perm_.begin() + std::ptrdiff_t(i), perm_.begin() + std::ptrdiff_t(end));
      }
      pos_ = n_;
      return out;
    }
    for (int s = 0; s < steps_; ++s) {
      std::vector<std::size_t> b;
      for (int k = 0; k < batch_; ++k) {
        if (pos_ == n_) reshuffle();
        b.push_back(perm_[pos_++]);
      }
      out.push_back(std::move(b));
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    pos_ = 0;
  }

  std::size_t n_;
  int batch_, steps_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_;
};

std::vector<const LongitudinalSlicePair*> validation_subset(const std::vector<LongitudinalSlicePair>& val, int limit) {
  std::vector<const LongitudinalSlicePair*> out;
  if (limit <= 0 || std::size_t(limit) >= val.size()) {
    for (const auto& s : val) out.push_back(&s);
    return out;
  }
  for (int i = 0; i < limit; ++i) out.push_back(&val[std::size_t(i) * val.size() / std::size_t(limit)]);
  return out;
}

RestorationSample corrupt(const LongitudinalSlicePair& pair, PretextTask task, const AugmentConfig& aug, Rng& rng) {
  LayoutConfig layout = aug.layout();
  if (aug.within_lung && pair.target_lung) {
    layout.region = &*pair.target_lung;
    Rng fallback = rng;
    try {
      return augment_pair(pair, task, rng, layout);
    } catch (const LayoutInfeasible&) {
      rng = fallback;
      layout.region = nullptr;
    }
  }
  return augment_pair(pair, task, rng, layout);
}

struct RestorationBatch {
  Tensor<float> input, truth, mask;
};

RestorationBatch restoration_batch(const std::vector<RestorationSample>& samples, bool longitudinal) {
  std::vector<const LongitudinalSlicePair*> pairs;
  for (const auto& s : samples) pairs.push_back(&s.pair);
  RestorationBatch b;
  b.input = input_batch(pairs, longitudinal);
  const int n = int(samples.size()), h = b.input.h, w = b.input.w;
  b.truth = Tensor<float>(n, 1, h, w);
  b.mask = Tensor<float>(n, 1, h, w);
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[std::size_t(i)];
    std::copy(s.target.data(), s.target.data() + s.target.size(), b.truth.sample(i));
    for (Eigen::Index q = 0; q < s.mask.size(); ++q) b.mask.sample(i)[q] = s.mask.data()[q] ? 1.0f : 0.0f;
  }
  return b;
}

std::vector<std::uint8_t> seg_labels(const std::vector<const LongitudinalSlicePair*>& batch) {
  std::vector<std::uint8_t> out;
  for (const auto* s : batch) {
    if (!s->target_seg) throw InputError("train: slice of " + s->patient_id + " has no segmentation");
    out.insert(out.end(), s->target_seg->data(), s->target_seg->data() + s->target_seg->size());
  }
  return out;
}

std::vector<PathologyLabels> cls_labels(const std::vector<const LongitudinalSlicePair*>& batch) {
  std::vector<PathologyLabels> out;
  for (const auto* s : batch) {
    if (!s->target_labels) throw InputError("train: slice of " + s->patient_id + " has no pathology labels");
    out.push_back(*s->target_labels);
  }
  return out;
}

LabelImage argmax_labels(const Tensor<float>& logits, int i) {
  LabelImage out(logits.h, logits.w);
  const float* s = logits.sample(i);
  const std::size_t plane = logits.plane();
  for (std::size_t q = 0; q < plane; ++q) {
    int best = 0;
    for (int c = 1; c < logits.c; ++c)
      if (s[c * plane + q] > s[best * plane + q]) best = c;
    out.data()[q] = std::uint8_t(best);
  }
  return out;
}

template <typename F>
void for_batches(const std::vector<const LongitudinalSlicePair*>& items, int batch_size, F&& f) {
  for (std::size_t i = 0; i < items.size(); i += std::size_t(batch_size)) {
    const std::size_t end = std::min(items.size(), i + std::size_t(batch_size));
    f(std::vector<const LongitudinalSlicePair*>(items.begin() + std::ptrdiff_t(i), items.begin() + std::ptrdiff_t(end)),
      i);
  }
}

struct Session {
  const TrainConfig& cfg;
  std::unique_ptr<Net> net;
  std::optional<Adam<float>> opt;
  TrainResult result;
  std::string pretraining = "none";
  Clock::time_point start = Clock::now();

  Session(const TrainConfig& c, const std::vector<LongitudinalSlicePair>& train,
          const std::vector<LongitudinalSlicePair>& val)
      : cfg(c) {
    cfg.validate();
    if (train.size() < 2) throw InputError("train: the training split needs at least two slices");
    if (val.empty()) throw InputError("train: the validation split is empty");
    net = std::make_unique<Net>(cfg.resolved_model(), derive_seed(cfg.seed, 1));
    result.log.config = cfg;
  }

  void init_from(const Checkpoint* init, TransferMode mode) {
    if (!init) return;
    result.transfer = transfer_weights(*init, *net, mode);
    if (init->meta.task == "pretext_black")
      pretraining = "black";
    else if (init->meta.task == "pretext_disorder")
      pretraining = "disorder";
    else
      pretraining = init->meta.pretraining;
  }

  void start_optimizer() { opt.emplace(net->params(), cfg.adam); }

  void step(const Tensor<float>& grad) {
    net->backward(grad);
    opt->step();
    ++result.log.steps;
  }

  CheckpointMeta meta(int epoch, double metric) const {
    CheckpointMeta m;
    m.task = to_string(cfg.task);
    m.longitudinal = cfg.longitudinal;
    m.pretraining = pretraining;
    m.epoch = epoch;
    m.val_metric = metric;
    m.seed = cfg.seed;
    return m;
  }

  void finish() {
    result.log.wall_seconds = seconds_since(start);
    result.log.selected_epoch = result.checkpoint.meta.epoch;
  }
};

void record_epoch(Session& s, ModelSelector& sel, EpochRecord rec, const EpochCallback& on_epoch) {
  if (sel.update(rec.val_metric)) s.result.checkpoint = capture(*s.net, s.meta(rec.epoch, rec.val_metric));
  s.result.log.epochs.push_back(rec);
  if (on_epoch) on_epoch(rec);
}

}  // namespace

RestorationSample validation_sample(const LongitudinalSlicePair& pair, PretextTask task, const AugmentConfig& aug,
                                    std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed ^ 0x76616c6964ULL, index));
  return corrupt(pair, task, aug, rng);
}

TrainResult pretrain(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                     const std::vector<LongitudinalSlicePair>& val, const EpochCallback& on_epoch) {
  if (!is_pretext(cfg.task)) throw InputError("pretrain: task must be a pretext task");
  Session s(cfg, train, val);
  s.start_optimizer();
  s.result.log.selection = "min val_loss";
  const PretextTask task = cfg.task == TrainTask::pretext_black ? PretextTask::black : PretextTask::disorder;
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.steps_per_epoch, derive_seed(cfg.seed, 3));
  Rng aug_rng(derive_seed(cfg.seed, 2));
  const auto val_items = validation_subset(val, cfg.max_val_slices);
  std::vector<RestorationSample> val_samples;
  for (std::size_t i = 0; i < val_items.size(); ++i)
    val_samples.push_back(validation_sample(*val_items[i], task, cfg.augment, cfg.seed, i));
  ModelSelector sel(ModelSelector::Goal::minimize, cfg.patience);

  for (int epoch = 1; epoch <= cfg.epochs(); ++epoch) {
    const auto t0 = Clock::now();
    double train_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : sampler.epoch()) {
      std::vector<RestorationSample> batch;
      for (std::size_t i : idx) batch.push_back(corrupt(train[i], task, cfg.augment, aug_rng));
      const RestorationBatch b = restoration_batch(batch, cfg.longitudinal);
      s.net->params().zero_grad();
      const Tensor<float> y = s.net->forward(b.input, Mode::train);
      Tensor<float> g;
      train_loss += restoration_loss(y, b.truth, b.mask, &g, cfg.masked_patch_mean) * double(idx.size());
      seen += idx.size();
      s.step(g);
    }
    double val_loss = 0.0;
    for (std::size_t i = 0; i < val_samples.size(); i += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(val_samples.size(), i + std::size_t(cfg.batch_size));
      const std::vector<RestorationSample> chunk(val_samples.begin() + std::ptrdiff_t(i),
                                                 val_samples.begin() + std::ptrdiff_t(end));
      const RestorationBatch b = restoration_batch(chunk, cfg.longitudinal);
      const Tensor<float> y = s.net->forward(b.input, Mode::eval);
      val_loss += restoration_loss(y, b.truth, b.mask, nullptr, cfg.masked_patch_mean) * double(chunk.size());
    }
    val_loss /= double(val_samples.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? train_loss / double(seen) : 0.0;
    rec.val_loss = val_loss;
    rec.val_metric = val_loss;
    rec.seconds = seconds_since(t0);
    record_epoch(s, sel, rec, on_epoch);
    if (sel.should_stop()) {
      s.result.log.early_stopped = true;
      break;
    }
  }
  s.finish();
  return std::move(s.result);
}

TrainResult finetune_segmentation(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                                  const std::vector<LongitudinalSlicePair>& val, const Checkpoint* init,
                                  const EpochCallback& on_epoch) {
  if (cfg.task != TrainTask::seg) throw InputError("finetune_segmentation: task must be seg");
  Session s(cfg, train, val);
  s.init_from(init, TransferMode::full_trunk);
  s.start_optimizer();
  s.result.log.selection = "max val_mean_dice";
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.steps_per_epoch, derive_seed(cfg.seed, 3));
  const auto val_items = validation_subset(val, cfg.max_val_slices);
  ModelSelector sel(ModelSelector::Goal::maximize, 0);

  for (int epoch = 1; epoch <= cfg.epochs(); ++epoch) {
    const auto t0 = Clock::now();
    double train_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : sampler.epoch()) {
      std::vector<const LongitudinalSlicePair*> batch;
      for (std::size_t i : idx) batch.push_back(&train[i]);
      s.net->params().zero_grad();
      const Tensor<float> y = s.net->forward(input_batch(batch, cfg.longitudinal), Mode::train);
      Tensor<float> g;
      train_loss += dice_loss(y, seg_labels(batch), cfg.dice_eps, &g) * double(idx.size());
      seen += idx.size();
      s.step(g);
    }
    DiceCounts counts;
    double val_loss = 0.0;
    for_batches(val_items, cfg.batch_size, [&](const std::vector<const LongitudinalSlicePair*>& batch, std::size_t) {
      const Tensor<float> y = s.net->forward(input_batch(batch, cfg.longitudinal), Mode::eval);
      val_loss += dice_loss(y, seg_labels(batch), cfg.dice_eps) * double(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) counts.add(argmax_labels(y, int(i)), *batch[i]->target_seg);
    });
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? train_loss / double(seen) : 0.0;
    rec.val_loss = val_loss / double(val_items.size());
    rec.val_metric = (counts.dice(1) + counts.dice(2) + counts.dice(3)) / 3.0;
    rec.details = {{"dice_healthy", counts.dice(1)},
                   {"dice_ggo", counts.dice(2)},
                   {"dice_cons", counts.dice(3)},
                   {"dice_micro", counts.micro()}};
    rec.seconds = seconds_since(t0);
    record_epoch(s, sel, rec, on_epoch);
  }
  s.finish();
  return std::move(s.result);
}

TrainResult finetune_classification(const TrainConfig& cfg, const std::vector<LongitudinalSlicePair>& train,
                                    const std::vector<LongitudinalSlicePair>& val, const Checkpoint* init,
                                    const EpochCallback& on_epoch) {
  if (cfg.task != TrainTask::cls) throw InputError("finetune_classification: task must be cls");
  Session s(cfg, train, val);
  s.init_from(init, TransferMode::encoder_only);
  s.start_optimizer();
  s.result.log.selection = "max val_mean_accuracy";
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.steps_per_epoch, derive_seed(cfg.seed, 3));
  const auto val_items = validation_subset(val, cfg.max_val_slices);
  ModelSelector sel(ModelSelector::Goal::maximize, 0);

  for (int epoch = 1; epoch <= cfg.epochs(); ++epoch) {
    const auto t0 = Clock::now();
    double train_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : sampler.epoch()) {
      std::vector<const LongitudinalSlicePair*> batch;
      for (std::size_t i : idx) batch.push_back(&train[i]);
      s.net->params().zero_grad();
      const Tensor<float> y = s.net->forward(input_batch(batch, cfg.longitudinal), Mode::train);
      Tensor<float> g;
      train_loss += bce_loss(y, cls_labels(batch), &g) * double(idx.size());
      seen += idx.size();
      s.step(g);
    }
    ClassificationScores scores;
    double val_loss = 0.0;
    for_batches(val_items, cfg.batch_size, [&](const std::vector<const LongitudinalSlicePair*>& batch, std::size_t) {
      const Tensor<float> y = s.net->forward(input_batch(batch, cfg.longitudinal), Mode::eval);
      const auto labels = cls_labels(batch);
      val_loss += bce_loss(y, labels) * double(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i)
        scores.add(1.0 / (1.0 + std::exp(-double(y.at(int(i), 0, 0, 0)))),
                   1.0 / (1.0 + std::exp(-double(y.at(int(i), 1, 0, 0)))), labels[i]);
    });
    const ClassificationMetrics m = classification_metrics(scores);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? train_loss / double(seen) : 0.0;
    rec.val_loss = val_loss / double(val_items.size());
    rec.val_metric = m.accuracy_overall;
    rec.details = {{"accuracy_ggo", m.accuracy_ggo},
                   {"accuracy_cons", m.accuracy_cons},
                   {"auc", m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr)}};
    rec.seconds = seconds_since(t0);
    record_epoch(s, sel, rec, on_epoch);
  }
  s.finish();
  return std::move(s.result);
}

std::unique_ptr<Net> network_from_checkpoint(const Checkpoint& c) {
  auto net = std::make_unique<Net>(c.config, c.meta.seed);
  load_into(c, *net);
  return net;
}

std::vector<LabelImage> predict_segmentation(Net& net, const std::vector<LongitudinalSlicePair>& slices,
                                             bool longitudinal, int batch_size) {
  if (net.config().head != Head::segmentation) throw InputError("predict: not a segmentation network");
  std::vector<const LongitudinalSlicePair*> items;
  for (const auto& s : slices) items.push_back(&s);
  std::vector<LabelImage> out;
  for_batches(items, batch_size, [&](const std::vector<const LongitudinalSlicePair*>& batch, std::size_t) {
    const Tensor<float> y = net.forward(input_batch(batch, longitudinal), Mode::eval);
    for (int i = 0; i < y.n; ++i) out.push_back(argmax_labels(y, i));
  });
  return out;
}

std::vector<std::array<double, 2>> predict_classification(Net& net, const std::vector<LongitudinalSlicePair>& slices,
                                                          bool longitudinal, int batch_size) {
  if (net.config().head != Head::classification) throw InputError("predict: not a classification network");
  std::vector<const LongitudinalSlicePair*> items;
  for (const auto& s : slices) items.push_back(&s);
  std::vector<std::array<double, 2>> out;
  for_batches(items, batch_size, [&](const std::vector<const LongitudinalSlicePair*>& batch, std::size_t) {
    const Tensor<float> y = net.forward(input_batch(batch, longitudinal), Mode::eval);
    for (int i = 0; i < y.n; ++i)
      out.push_back({1.0 / (1.0 + std::exp(-double(y.at(i, 0, 0, 0)))),
                     1.0 / (1.0 + std::exp(-double(y.at(i, 1, 0, 0))))});
  });
  return out;
}

}  // namespace lss

#include <doctest.h>

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "lss/train/losses.hpp"
#include "lss/train/trainer.hpp"
#include "test_util.hpp"

using namespace lss;
using nn::Tensor;

namespace {

Tensor<double> filled(int n, int c, int h, int w, double v) {
  Tensor<double> t(n, c, h, w);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = 0, double hi = 1) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = uniform_real(rng, lo, hi);
  return t;
}

// Written out per pixel, without sharing anything with the library.
double restoration_oracle(const Tensor<double>& x, const Tensor<double>& y, const Tensor<double>& m) {
  const double n = double(x.size());
  double a = 0, b = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    a += (x.data[i] - y.data[i]) * (x.data[i] - y.data[i]);
    const double d = m.data[i] * x.data[i] - m.data[i] * y.data[i];
    b += d * d;
  }
  return 0.5 * (a / n) + 0.5 * (b / n);
}

double dice_oracle(const Tensor<double>& logits, const std::vector<std::uint8_t>& labels, double eps) {
  const int C = logits.c;
  const int H = logits.h, W = logits.w;
  double total = 0;
  for (int c = 0; c < C; ++c) {
    double inter = 0, ps = 0, gs = 0;
    for (int i = 0; i < logits.n; ++i)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double z = 0;
          for (int k = 0; k < C; ++k) z += std::exp(logits.at(i, k, y, x));
          const double p = std::exp(logits.at(i, c, y, x)) / z;
          const double g = labels[std::size_t((i * H + y) * W + x)] == c ? 1.0 : 0.0;
          inter += p * g, ps += p, gs += g;
        }
    total += 1.0 - (2 * inter + eps) / (ps + gs + eps);
  }
  return total / C;
}

std::vector<LongitudinalSlicePair> toy_slices(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LongitudinalSlicePair> out;
  for (int k = 0; k < count; ++k) {
    LongitudinalSlicePair p;
    p.reference = Image2D(size, size);
    p.target = Image2D(size, size);
    LabelImage seg = LabelImage::Zero(size, size);
    LabelImage lung = LabelImage::Zero(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool in_lung = y > 4 && y < size - 4 && x > 4 && x < size - 4;
        p.reference(y, x) = float(in_lung ? 0.2 : 0.6) + float(uniform_real(rng, 0, 0.05));
        p.target(y, x) = p.reference(y, x);
        if (in_lung) lung(y, x) = 1, seg(y, x) = 1;
      }
    const int cy = uniform_int(rng, 8, size - 9), cx = uniform_int(rng, 8, size - 9);
    const std::uint8_t cls = std::uint8_t(2 + k % 2);
    for (int y = cy - 3; y <= cy + 3; ++y)
      for (int x = cx - 3; x <= cx + 3; ++x) {
        seg(y, x) = cls;
        p.target(y, x) = cls == 2 ? 0.45f : 0.8f;
      }
    p.target_labels = derive_labels(seg);
    p.target_seg = seg;
    p.target_lung = lung;
    p.patient_id = "p" + std::to_string(k / 4);
    p.slice_index = k % 4;
    out.push_back(std::move(p));
  }
  return out;
}

TrainConfig tiny_config(TrainTask task) {
  TrainConfig c;
  c.task = task;
  c.max_epochs = 2;
  c.steps_per_epoch = 2;
  c.batch_size = 2;
  c.seed = 42;
  c.patience = 1;
  c.adam.lr = 1e-3;
  c.model.growth_rate = 2;
  c.model.layers_per_block = 1;
  c.model.initial_features = 4;
  c.augment.count_min = 2;
  c.augment.count_max = 4;
  c.augment.side_min = 3;
  c.augment.side_max = 5;
  return c;
}

bool same_weights(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (a.tensors[i].values != b.tensors[i].values) return false;
  return true;
}

}  // namespace

TEST_CASE("restoration loss worked example") {
  Tensor<double> x(1, 1, 2, 2), m(1, 1, 2, 2);
  const auto pred = filled(1, 1, 2, 2, 1.0);
  m.data = {1, 0, 0, 0};
  CHECK(restoration_loss(pred, x, m) == doctest::Approx(0.625));
  CHECK(restoration_oracle(pred, x, m) == doctest::Approx(0.625));
}

TEST_CASE("restoration loss special cases and oracle") {
  Rng rng(1);
  const auto x = random_tensor(2, 1, 8, 8, rng), y = random_tensor(2, 1, 8, 8, rng);
  Tensor<double> m(2, 1, 8, 8);
  for (auto& v : m.data) v = uniform_real(rng, 0, 1) < 0.3 ? 1.0 : 0.0;
  CHECK(restoration_loss(x, x, m) == 0.0);
  const auto ones = filled(2, 1, 8, 8, 1.0);
  double mse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mse += (x.data[i] - y.data[i]) * (x.data[i] - y.data[i]);
  CHECK(restoration_loss(x, y, ones) == doctest::Approx(mse / double(x.size())).epsilon(1e-12));
  CHECK(std::abs(restoration_loss(x, y, m) - restoration_oracle(x, y, m)) <= 1e-12);

  Tensor<double> g;
  restoration_loss(x, y, m, &g);
  Tensor<double> probe = x;
  for (std::size_t i : {std::size_t(0), std::size_t(37), std::size_t(100)}) {
    probe.data[i] += 1e-6;
    const double up = restoration_oracle(probe, y, m);
    probe.data[i] -= 2e-6;
    const double down = restoration_oracle(probe, y, m);
    probe.data[i] = x.data[i];
    CHECK((up - down) / 2e-6 == doctest::Approx(g.data[i]).epsilon(1e-6));
  }

  auto bad = m;
  bad.data[3] = 0.5;
  CHECK_THROWS_AS(restoration_loss(x, y, bad), InputError);
  CHECK_THROWS_AS(restoration_loss(x, random_tensor(2, 1, 8, 4, rng), m), InputError);
}

TEST_CASE("masked mean variant normalizes by the patch area") {
  Tensor<double> x(1, 1, 2, 2), y(1, 1, 2, 2), m(1, 1, 2, 2);
  x.data = {1, 0, 0, 0};
  m.data = {1, 0, 0, 0};
  CHECK(restoration_loss(x, y, m, nullptr, true) == doctest::Approx(0.5 * 0.25 + 0.5 * 1.0));
}

TEST_CASE("dice loss") {
  SUBCASE("uniform softmax on a single-class slice") {
    const auto logits = filled(1, 4, 8, 8, 0.0);
    const std::vector<std::uint8_t> labels(64, 2);
    // present class: 1 - 2*16/(16+64) = 0.6; absent classes: ~1
    const double l = dice_loss(logits, labels);
    CHECK(l == doctest::Approx((0.6 + 3.0) / 4.0).epsilon(1e-6));
    CHECK(std::abs(l - dice_oracle(logits, labels, 1e-5)) <= 1e-12);
  }
  SUBCASE("confident and correct") {
    Rng rng(2);
    std::vector<std::uint8_t> labels(2 * 16 * 16);
    for (auto& v : labels) v = std::uint8_t(uniform_int(rng, 0, 3));
    Tensor<double> logits(2, 4, 16, 16);
    for (int i = 0; i < 2; ++i)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          for (int c = 0; c < 4; ++c) logits.at(i, c, y, x) = labels[std::size_t((i * 16 + y) * 16 + x)] == c ? 30 : -30;
    CHECK(dice_loss(logits, labels) <= 1e-3);
  }
  SUBCASE("joint over the batch, matches the oracle and its gradient") {
    Rng rng(3);
    const auto logits = random_tensor(3, 4, 8, 8, rng, -2, 2);
    std::vector<std::uint8_t> labels(3 * 64);
    for (auto& v : labels) v = std::uint8_t(uniform_int(rng, 0, 3));
    CHECK(std::abs(dice_loss(logits, labels) - dice_oracle(logits, labels, 1e-5)) <= 1e-12);

    Tensor<double> first(1, 4, 8, 8);
    std::copy(logits.sample(0), logits.sample(0) + logits.sample_stride(), first.data.begin());
    const std::vector<std::uint8_t> first_labels(labels.begin(), labels.begin() + 64);
    CHECK(std::abs(dice_loss(first, first_labels) - dice_loss(logits, labels)) > 1e-6);

    Tensor<double> g;
    dice_loss(logits, labels, 1e-5, &g);
    Tensor<double> probe = logits;
    double worst = 0;
    for (std::size_t i = 0; i < logits.size(); i += 7) {
      probe.data[i] += 1e-6;
      const double up = dice_oracle(probe, labels, 1e-5);
      probe.data[i] -= 2e-6;
      const double down = dice_oracle(probe, labels, 1e-5);
      probe.data[i] = logits.data[i];
      worst = std::max(worst, std::abs((up - down) / 2e-6 - g.data[i]));
    }
    CHECK(worst <= 1e-8);
  }
  SUBCASE("labels must fit the classes") {
    const auto logits = filled(1, 4, 2, 2, 0.0);
    CHECK_THROWS_AS(dice_loss(logits, std::vector<std::uint8_t>{0, 1, 4, 0}), InputError);
    CHECK_THROWS_AS(dice_loss(logits, std::vector<std::uint8_t>{0, 1}), InputError);
  }
}

TEST_CASE("binary cross entropy") {
  const std::vector<PathologyLabels> pos{{true, true}};
  CHECK(bce_loss(filled(1, 2, 1, 1, 0.0), pos) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(filled(1, 2, 1, 1, 20.0), pos) <= 1e-8);
  CHECK(bce_loss(filled(1, 2, 1, 1, -800.0), std::vector<PathologyLabels>{{false, false}}) == 0.0);
  CHECK(std::isfinite(bce_loss(filled(1, 2, 1, 1, 800.0), std::vector<PathologyLabels>{{false, false}})));

  Rng rng(4);
  const auto z = random_tensor(5, 2, 1, 1, rng, -6, 6);
  std::vector<PathologyLabels> labels(5);
  for (auto& l : labels) l = {uniform_int(rng, 0, 1) == 1, uniform_int(rng, 0, 1) == 1};
  double naive = 0;
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 2; ++c) {
      const double p = 1 / (1 + std::exp(-z.at(i, c, 0, 0)));
      const double y = c == 0 ? labels[i].ggo_present : labels[i].cons_present;
      naive -= y * std::log(p) + (1 - y) * std::log(1 - p);
    }
  Tensor<double> g;
  CHECK(std::abs(bce_loss(z, labels, &g) - naive / 10) <= 1e-9);
  const double p0 = 1 / (1 + std::exp(-z.at(0, 0, 0, 0)));
  CHECK(g.at(0, 0, 0, 0) == doctest::Approx((p0 - labels[0].ggo_present) / 10));
}

TEST_CASE("early stopping and model selection") {
  ModelSelector stop(ModelSelector::Goal::minimize, 5);
  const double series[] = {0.50, 0.40, 0.39, 0.41, 0.42, 0.43, 0.44, 0.45, 0.46};
  int stopped_after = 0;
  for (double v : series) {
    stop.update(v);
    if (stop.should_stop()) {
      stopped_after = stop.epochs_seen();
      break;
    }
  }
  CHECK(stopped_after == 8);
  CHECK(stop.best_epoch() == 3);

  ModelSelector pick(ModelSelector::Goal::maximize, 0);
  for (double v : {0.30, 0.50, 0.45}) pick.update(v);
  CHECK(pick.best_epoch() == 2);
  CHECK_FALSE(pick.should_stop());
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  nn::ParamSet<double> ps;
  auto& p = ps.add("w", {2}, nn::Init::zeros);
  p.value = {1.0, -1.0};
  p.grad = {3.0, -0.5};
  Adam<double> opt(ps, AdamParams{0.1, 0.9, 0.999, 1e-8});
  opt.step();
  CHECK(p.value[0] == doctest::Approx(0.9));
  CHECK(p.value[1] == doctest::Approx(-0.9));
  CHECK(opt.steps() == 1);
}

TEST_CASE("train config") {
  TrainConfig c;
  c.task = TrainTask::seg;
  CHECK(c.resolved_model().in_channels == 2);
  c.longitudinal = false;
  CHECK(c.resolved_model().in_channels == 1);
  CHECK(c.resolved_model().head == Head::segmentation);
  CHECK(c.epochs() == 30);
  c.task = TrainTask::pretext_black;
  CHECK(c.epochs() == 100);
  CHECK(c.resolved_model().head == Head::restoration);

  nlohmann::json j = tiny_config(TrainTask::cls);
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  j["learning_rate"] = 0.1;
  CHECK_THROWS_WITH_AS(j.get<TrainConfig>(), doctest::Contains("learning_rate"), InputError);
  CHECK_THROWS_AS(task_from_string("pretext_blur"), InputError);

  TrainConfig bad;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = tiny_config(TrainTask::pretext_black);
  bad.patience = 2;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("patience"), InputError);
}

TEST_CASE("train log round trip") {
  test::TempDir dir;
  TrainLog log;
  log.selection = "min val_loss";
  log.epochs.push_back({1, 0.5, 0.4, 0.4, {{"k", 1}}, 1.5});
  log.epochs.push_back({2, 0.3, 0.35, 0.35, {}, 1.25});
  log.selected_epoch = 2;
  log.steps = 20;
  write_train_log(log, dir.path());
  const TrainLog back = read_train_log(dir.path());
  REQUIRE(back.epochs.size() == 2);
  CHECK(back.epochs[1].train_loss == 0.3);
  CHECK(back.epochs[0].details["k"] == 1);
  CHECK(back.selected_epoch == 2);
  CHECK(back.selection == "min val_loss");
  CHECK(back.steps == 20);
}

TEST_CASE("validation corruption is fixed per sample") {
  const auto slices = toy_slices(2, 32, 5);
  const auto aug = tiny_config(TrainTask::pretext_black).augment;
  const auto a = validation_sample(slices[0], PretextTask::black, aug, 7, 0);
  const auto b = validation_sample(slices[0], PretextTask::black, aug, 7, 0);
  const auto c = validation_sample(slices[0], PretextTask::black, aug, 7, 1);
  CHECK((a.mask == b.mask).all());
  CHECK_FALSE((a.mask == c.mask).all());
}

TEST_CASE("same seed, same training run") {
  const auto train = toy_slices(8, 32, 6), val = toy_slices(4, 32, 7);
  const TrainConfig cfg = tiny_config(TrainTask::pretext_disorder);
  const TrainResult a = pretrain(cfg, train, val), b = pretrain(cfg, train, val);
  REQUIRE(a.log.epochs.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.log.epochs[e].train_loss == b.log.epochs[e].train_loss);
    CHECK(a.log.epochs[e].val_loss == b.log.epochs[e].val_loss);
  }
  CHECK(same_weights(a.checkpoint, b.checkpoint));
  CHECK(a.checkpoint.meta.task == "pretext_disorder");
  CHECK(a.checkpoint.meta.longitudinal);

  TrainConfig other = cfg;
  other.seed = 43;
  CHECK_FALSE(pretrain(other, train, val).log.epochs[0].train_loss == a.log.epochs[0].train_loss);
}

TEST_CASE("fine-tuning starts from the pretext trunk") {
  const auto train = toy_slices(8, 32, 8), val = toy_slices(4, 32, 9);
  const TrainResult pre = pretrain(tiny_config(TrainTask::pretext_black), train, val);

  TrainConfig seg = tiny_config(TrainTask::seg);
  const TrainResult s = finetune_segmentation(seg, train, val, &pre.checkpoint);
  REQUIRE(s.transfer);
  CHECK(s.transfer->copied.size() > 0);
  for (const auto& name : s.transfer->initialized) CHECK(is_head_param(name));
  CHECK(s.checkpoint.meta.pretraining == "black");
  CHECK(s.log.selection == "max val_mean_dice");

  const TrainResult fresh = finetune_segmentation(seg, train, val);
  CHECK_FALSE(fresh.transfer);
  CHECK(fresh.checkpoint.meta.pretraining == "none");

  TrainConfig cls = tiny_config(TrainTask::cls);
  const TrainResult k = finetune_classification(cls, train, val, &pre.checkpoint);
  REQUIRE(k.transfer);
  for (const auto& name : k.transfer->copied) CHECK(is_encoder_param(name));
  const auto net = network_from_checkpoint(k.checkpoint);
  const auto scores = predict_classification(*net, val, true, 2);
  REQUIRE(scores.size() == val.size());
  for (const auto& s2 : scores) CHECK((s2[0] > 0 && s2[0] < 1 && s2[1] > 0 && s2[1] < 1));

  TrainConfig stat = tiny_config(TrainTask::pretext_black);
  stat.longitudinal = false;
  const TrainResult st = pretrain(stat, train, val);
  CHECK_THROWS_AS(finetune_segmentation(seg, train, val, &st.checkpoint), TransferError);
}

TEST_CASE("segmentation predictions cover every slice") {
  const auto train = toy_slices(4, 32, 10);
  const TrainResult r = finetune_segmentation(tiny_config(TrainTask::seg), train, train);
  const auto net = network_from_checkpoint(r.checkpoint);
  const auto pred = predict_segmentation(*net, train, true, 3);
  REQUIRE(pred.size() == 4);
  for (const auto& p : pred) {
    CHECK((p.rows() == 32 && p.cols() == 32));
    CHECK(p.maxCoeff() <= 3);
  }
}

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "seizset/errors.hpp"
#include "seizset/train.hpp"
#include "test_util.hpp"

using namespace seizset;
using seizset::testing::random_tensor;
using seizset::testing::TempDir;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.dim_temporal = 8;
  c.dim_output = 8;
  c.d_k = 8;
  c.d_v = 8;
  c.heads = 2;
  return c;
}

LabelConfig scaled_labels() {
  LabelConfig c;
  c.sph_s = 18;
  c.sop_s = 180;
  c.exclusion_s = 360;
  c.merge_gap_s = 360;
  return c;
}

/// One 4000-s record, three seizures, noise features; preictal stamps of
/// channel `planted` get +shift on every feature.
PatientDataset toy_patient(std::uint64_t seed, double shift, std::size_t channels = 3, std::size_t planted = 1,
                           std::size_t features = 4) {
  FeatureTimeline tl;
  tl.n_times = 3999;
  tl.n_channels = channels;
  tl.n_features = features;
  for (std::size_t c = 0; c < channels; ++c) tl.channel_labels.push_back("C" + std::to_string(c));
  tl.features.resize(tl.n_times * channels * features);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : tl.features) v = g(rng);
  tl.labels.assign(tl.n_times, Period::interictal);
  PatientDataset d = assemble_patient("toy", {RecordTimeline{"r", 0.0, tl}},
                                      {{1000, 1030}, {2300, 2320}, {3700, 3740}}, scaled_labels());
  FeatureTimeline& t = d.records[0].timeline;
  for (std::size_t k = 0; k < t.n_times; ++k)
    if (t.labels[k] == Period::preictal)
      for (auto& v : t.at(k, planted)) v += shift;
  return d;
}

Fold all_train(const PatientDataset& d) {
  Fold f;
  for (std::size_t i = 0; i < d.samples.size(); ++i) f.train.push_back(i);
  return f;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.rng_seed = 5;
  return c;
}

}  // namespace

TEST_CASE("bce: analytic values, stability, gradient") {
  CHECK(bce_loss(0.5, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(0.5, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(0.5, 1.0, 3.0) == doctest::Approx(3 * std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(1 - 1e-12, 1.0) < 1e-11);
  CHECK(bce_loss(1e-12, 0.0) < 1e-11);
  CHECK(bce_from_logit(800.0, 1.0) == 0.0);
  CHECK(bce_from_logit(-800.0, 1.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(bce_from_logit(-800.0, 0.0)));
  CHECK_THROWS_AS(bce_loss(1.0, 1.0), NumericError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({6, 1}, rng, -4, 4);
    std::vector<double> y, w;
    for (int i = 0; i < 6; ++i) {
      y.push_back(static_cast<double>(rng() % 2));
      w.push_back(0.5 + static_cast<double>(rng() % 3));
    }
    Graph g;
    Var zv = g.leaf(z);
    Var loss = bce_with_logits(zv, y, w);
    double direct = 0.0;
    for (int i = 0; i < 6; ++i) direct += bce_from_logit(z[i], y[i], w[i]) / 6.0;
    CHECK(loss.value()[0] == doctest::Approx(direct).epsilon(1e-14));
    g.backward(loss);
    for (int i = 0; i < 6; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      CHECK(g.grad(zv)[i] == doctest::Approx(w[i] * (p - y[i]) / 6.0).epsilon(1e-12));
    }
    auto f = [&](Graph&, Var v) { return bce_with_logits(v, y, w); };
    CHECK(finite_diff_check(f, z, 1e-5) < 1e-4);
  }
}

TEST_CASE("optimizer: Adam matches a scalar reference") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  ModelParams m = init_model(tiny_model(), 3);
  const ModelParams start = m;
  Optimizer opt(m, cfg);
  std::mt19937_64 rng(2);
  std::vector<std::vector<Tensor>> grads_seq;
  for (int step = 0; step < 5; ++step) {
    std::vector<Tensor> gs;
    for (const Tensor* t : std::as_const(m).trainable()) gs.push_back(random_tensor(t->shape(), rng));
    std::vector<const Tensor*> ptrs;
    for (const auto& t : gs) ptrs.push_back(&t);
    opt.step(m, ptrs);
    grads_seq.push_back(std::move(gs));
  }
  CHECK(opt.steps() == 5);
  const auto before = std::as_const(start).trainable();
  const auto after = std::as_const(m).trainable();
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (std::size_t k = 0; k < before[i]->size(); k += 7) {
      double p = (*before[i])[k], mo = 0, ve = 0;
      for (int s = 1; s <= 5; ++s) {
        const double gk = grads_seq[static_cast<std::size_t>(s - 1)][i][k];
        mo = 0.9 * mo + 0.1 * gk;
        ve = 0.999 * ve + 0.001 * gk * gk;
        const double mh = mo / (1 - std::pow(0.9, s)), vh = ve / (1 - std::pow(0.999, s));
        p -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      }
      CHECK((*after[i])[k] == doctest::Approx(p).epsilon(1e-12));
    }
  }
}

TEST_CASE("train_epoch: zero learning rate is a fixed point; non-finite loss names the batch") {
  const PatientDataset d = toy_patient(3, 2.0);
  ModelConfig mc = tiny_model();
  mc.n_features = 4;
  ModelParams m = init_model(mc, 4);
  const ModelParams start = m;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  Optimizer opt(m, cfg);
  std::vector<Batch> batches;
  for (std::size_t lo = 0; lo < 64; lo += 16) {
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < lo + 16; ++i) idx.push_back(i * 7 % d.samples.size());
    Batch b;
    b.x = gather_batch(d, idx);
    b.labels = gather_labels(d, idx);
    b.weights.assign(idx.size(), 1.0);
    b.samples = idx.size();
    b.channels = 3;
    batches.push_back(std::move(b));
  }
  const EpochStats s = train_epoch(m, opt, batches);
  CHECK(s.batches == 4);
  CHECK(std::isfinite(s.train_loss));
  const auto a = std::as_const(m).trainable(), b = std::as_const(start).trainable();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  batches[2].x[5] = std::nan("");
  try {
    train_epoch(m, opt, batches);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("batch 2") != std::string::npos);
  }
  CHECK_THROWS_AS(train_epoch(m, opt, std::span<const Batch>{}), TrainingError);
}

TEST_CASE("train_epoch: repeated separable batch, small steps, loss never rises") {
  const PatientDataset d = toy_patient(5, 3.0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0, pos = 0, neg = 0; i < d.samples.size() && (pos < 8 || neg < 8); ++i) {
    auto& n = d.samples[i].label == 1 ? pos : neg;
    if (n < 8) {
      idx.push_back(i);
      ++n;
    }
  }
  REQUIRE(idx.size() == 16);
  ModelConfig mc = tiny_model();
  mc.n_features = 4;
  ModelParams m = init_model(mc, 6);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  Optimizer opt(m, cfg);
  Batch b;
  b.x = gather_batch(d, idx);
  b.labels = gather_labels(d, idx);
  b.weights.assign(16, 1.0);
  b.samples = 16;
  b.channels = 3;
  const std::vector<Batch> one{b};
  double prev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < 10; ++epoch) {
    const EpochStats s = train_epoch(m, opt, one);
    CHECK(s.train_loss <= prev);
    prev = s.train_loss;
  }
}

TEST_CASE("validation_split: stratified, disjoint, seeded") {
  const PatientDataset d = toy_patient(7, 0.0);
  const Fold f = all_train(d);
  const auto [tr, va] = validation_split(d.samples, f.train, 0.1, 9);
  CHECK(tr.size() + va.size() == f.train.size());
  std::size_t pos_all = 0, pos_val = 0;
  for (auto i : f.train) pos_all += d.samples[i].label;
  for (auto i : va) pos_val += d.samples[i].label;
  CHECK(pos_val == static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(pos_all))));
  std::vector<std::size_t> both = tr;
  both.insert(both.end(), va.begin(), va.end());
  std::sort(both.begin(), both.end());
  CHECK(both == f.train);
  CHECK(validation_split(d.samples, f.train, 0.1, 9) == std::make_pair(tr, va));
  CHECK(validation_split(d.samples, f.train, 0.1, 10).second != va);
  CHECK(validation_split(d.samples, f.train, 0.0, 9).second.empty());
}

TEST_CASE("fit_input_scaler matches moments of the gathered rows") {
  const PatientDataset d = toy_patient(8, 1.0);
  ModelConfig mc = tiny_model();
  mc.n_features = 4;
  ModelParams m = init_model(mc, 1);
  const std::vector<std::size_t> idx{3, 50, 400, 401, 900};
  const std::vector<std::size_t> chans{0, 2};
  fit_input_scaler(m, d, idx, chans);
  const Tensor x = gather_batch(d, idx, chans);
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0, s2 = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += x.at(r, k);
    const double mean = s / static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) s2 += (x.at(r, k) - mean) * (x.at(r, k) - mean);
    CHECK(m.input_mean[k] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(m.input_scale[k] == doctest::Approx(1.0 / std::sqrt(s2 / static_cast<double>(x.rows()))).epsilon(1e-9));
  }
  const Tensor z = standardize(m, x);
  double col = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) col += z.at(r, 1);
  CHECK(std::abs(col / static_cast<double>(z.rows())) < 1e-12);
}

TEST_CASE("fit: planted signal is learned; determinism; patience; errors") {
  const PatientDataset d = toy_patient(11, 1.5);
  const Fold f = all_train(d);
  TrainConfig cfg = quick(6);
  const TrainedModel a = fit(d, f, cfg, {}, tiny_model());
  REQUIRE(!a.history.empty());
  CHECK(a.history.back().val_accuracy > 0.9);
  CHECK(a.best_epoch >= 1);
  CHECK(a.channels == std::vector<std::size_t>{0, 1, 2});
  CHECK(a.val_samples > 0);

  const TrainedModel b = fit(d, f, cfg, {}, tiny_model());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  const auto pa = std::as_const(a.params).trainable(), pb = std::as_const(b.params).trainable();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

  // Stopping disabled: every epoch runs even when validation stalls.
  TrainConfig stall = quick(4);
  stall.learning_rate = 0.0;
  stall.early_stop_patience = 0;
  CHECK(fit(d, f, stall, {}, tiny_model()).history.size() == 4);
  stall.early_stop_patience = 1;
  CHECK(fit(d, f, stall, {}, tiny_model()).history.size() == 2);

  Fold single;
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    if (d.samples[i].label == 0) single.train.push_back(i);
  CHECK_THROWS_AS(fit(d, single, cfg, {}, tiny_model()), TrainingError);

  TempDir dir("trainlog");
  append_training_log(dir / "log.txt", "fold0", a);
  append_training_log(dir / "log.txt", "fold1", a);
  std::ifstream in(dir / "log.txt");
  std::string line;
  std::size_t lines = 0, best = 0;
  while (std::getline(in, line)) {
    ++lines;
    best += line.find(" best") != std::string::npos;
  }
  CHECK(lines == 2 * a.history.size());
  CHECK(best == 2);
}

TEST_CASE("retrain_selected: slicing, fresh seed, failure") {
  const PatientDataset d = toy_patient(12, 1.5);
  const Fold f = all_train(d);
  const TrainConfig cfg = quick(2);
  ChannelSelection sel;
  sel.status = ChannelSelection::Status::selected;
  sel.channels = {0, 2};
  const TrainedModel m = retrain_selected(d, f, sel, cfg, tiny_model());
  CHECK(m.channels == sel.channels);
  CHECK(m.config.rng_seed == retrain_seed(cfg.rng_seed));
  CHECK(m.config.rng_seed != cfg.rng_seed);
  const Tensor two = gather_batch(d, std::vector<std::size_t>{0}, m.channels);
  CHECK(two.rows() == 2 * 19);
  CHECK_NOTHROW(predict(m, two));
  CHECK_THROWS_AS(predict(m, gather_batch(d, std::vector<std::size_t>{0})), DimensionError);

  // Selecting every channel equals fit with the derived seed.
  sel.channels = {0, 1, 2};
  TrainConfig fresh = cfg;
  fresh.rng_seed = retrain_seed(cfg.rng_seed);
  const TrainedModel all = retrain_selected(d, f, sel, cfg, tiny_model());
  const TrainedModel direct = fit(d, f, fresh, {}, tiny_model());
  CHECK(all.params.head_w == direct.params.head_w);

  sel.status = ChannelSelection::Status::failed;
  CHECK_THROWS_AS(retrain_selected(d, f, sel, cfg, tiny_model()), SelectionError);
}

TEST_CASE("channel slicing of an 18-channel record") {
  FeatureTimeline tl;
  tl.n_times = 500;
  tl.n_channels = 18;
  tl.n_features = 44;
  for (std::size_t c = 0; c < 18; ++c) tl.channel_labels.push_back("C" + std::to_string(c));
  tl.features.assign(500 * 18 * 44, 0.0);
  for (std::size_t t = 0; t < 500; ++t)
    for (std::size_t c = 0; c < 18; ++c) tl.at(t, c)[0] = static_cast<double>(c);
  tl.labels.assign(500, Period::interictal);
  const PatientDataset d = assemble_patient("p", {RecordTimeline{"r", 0.0, tl}}, {}, scaled_labels());
  const std::vector<std::size_t> chans{12, 14};
  const Tensor x = gather_batch(d, std::vector<std::size_t>{0}, chans);
  CHECK(x.shape() == Shape{19 * 2, 44});
  CHECK(x.at(0, 0) == 12.0);
  CHECK(x.at(19, 0) == 14.0);
}

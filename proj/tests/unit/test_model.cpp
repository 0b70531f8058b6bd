#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <utility>

#include "seizset/errors.hpp"
#include "seizset/model.hpp"
#include "../support/oracles.hpp"
#include "test_util.hpp"

using namespace seizset;
using seizset::testing::max_abs_diff;
using seizset::testing::random_tensor;
using seizset::testing::TempDir;
using seizset::oracle::permute_channels;
using seizset::oracle::permute_time;
using seizset::oracle::perturb;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.seq_len = 5;
  c.n_features = 6;
  c.dim_temporal = 8;
  c.dim_output = 6;
  c.d_k = 4;
  c.d_v = 4;
  c.heads = 2;
  return c;
}

Var batch_loss(const ModelVars& v, const ModelConfig& cfg, Var x, std::size_t b, std::size_t c,
               const std::vector<double>& y) {
  ForwardOutput out = forward(v, cfg, x, b, c);
  const std::vector<double> w(y.size(), 1.0);
  return bce_with_logits(out.logits, y, w);
}

}  // namespace

TEST_CASE("parameter count of the default configuration") {
  const ModelParams m = init_model({}, 1);
  // kernel + W_Q + W_K + W_V + W_O + W_H + b_H + 2 layer norms, per stage.
  const std::size_t temporal = 64 + 64 * 64 + 44 * 64 + 44 * 64 + 64 * 64 + 64 * 64 + 64 + 4 * 64;
  const std::size_t channel = 64 + 64 * 64 * 4 + 64 * 64 + 64 + 4 * 64;
  CHECK(m.parameter_count() == temporal + channel + 64 + 1);
  CHECK(m.parameter_count() >= 30000);
  CHECK(m.parameter_count() <= 60000);
  CHECK(ModelParams::trainable_names().size() == m.trainable().size());
}

TEST_CASE("initialization: kernel spread and Xavier bounds") {
  ModelConfig c;
  c.dim_temporal = 4096;
  c.d_k = c.d_v = 64;
  c.dim_output = 64;
  const ModelParams m = init_model(c, 3);
  double s2 = 0.0;
  for (double v : m.kernel_temp.values()) s2 += v * v;
  CHECK(std::sqrt(s2 / 4096) == doctest::Approx(1.0 / 64).epsilon(0.05));
  const double bound = std::sqrt(6.0 / (44 + 64));
  for (double v : m.temporal.w_k.values()) CHECK(std::abs(v) <= bound);
  CHECK(init_model({}, 9).kernel_temp == init_model({}, 9).kernel_temp);
  ModelConfig bad;
  bad.heads = 5;
  CHECK_THROWS_AS(init_model(bad, 0), ConfigError);
}

TEST_CASE("mab_forward: identical keys give uniform attention") {
  std::mt19937_64 rng(2);
  const MabParams p = init_mab(8, 5, 8, 8, 4, 7);
  const Tensor x = random_tensor({1, 8}, rng);
  const Tensor row = random_tensor({1, 5}, rng);
  Tensor y({6, 5});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 5; ++c) y.at(r, c) = row[c];
  const MabResult r = mab_forward(x, y, p);
  for (double w : r.attention.values()) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-14));
}

TEST_CASE("mab_forward: permuting keys permutes attention, output unchanged") {
  std::mt19937_64 rng(4);
  const MabParams p = init_mab(8, 5, 8, 8, 2, 11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({2, 8}, rng);
    const Tensor y = random_tensor({7, 5}, rng);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor yp = y;
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 5; ++c) yp.at(r, c) = y.at(perm[r], c);
    const MabResult a = mab_forward(x, y, p), b = mab_forward(x, yp, p);
    CHECK(max_abs_diff(a.out, b.out) < 1e-12);
    for (std::size_t q = 0; q < 2; ++q)
      for (std::size_t j = 0; j < 7; ++j) CHECK(b.attention.at(q, j) == doctest::Approx(a.attention.at(q, perm[j])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(mab_forward(random_tensor({1, 7}, rng), random_tensor({3, 5}, rng), p), DimensionError);
  CHECK_THROWS_AS(mab_forward(random_tensor({1, 8}, rng), random_tensor({3, 4}, rng), p), DimensionError);
}

TEST_CASE("mab_forward: hand-traced single-head scalar example") {
  // Query 1x2, keys 2x1, d_k = d_v = 1, one head.
  MabParams p;
  p.heads = 1;
  p.w_q = Tensor({2, 1}, std::vector<double>{0.5, -1.0});
  p.w_k = Tensor({1, 1}, std::vector<double>{2.0});
  p.w_v = Tensor({1, 1}, std::vector<double>{-1.5});
  p.w_o = Tensor({1, 2}, std::vector<double>{1.0, 0.25});
  p.w_h = Tensor({2, 2}, std::vector<double>{0.3, -0.7, 1.1, 0.4});
  p.b_h = Tensor({1, 2}, std::vector<double>{0.1, 0.2});
  p.ln1_gain = Tensor({1, 2}, std::vector<double>{1.5, 0.5});
  p.ln1_bias = Tensor({1, 2}, std::vector<double>{0.0, 0.1});
  p.ln2_gain = Tensor({1, 2}, std::vector<double>{2.0, 1.0});
  p.ln2_bias = Tensor({1, 2}, std::vector<double>{-0.5, 0.5});
  const Tensor x({1, 2}, std::vector<double>{1.0, 2.0});
  const Tensor y({2, 1}, std::vector<double>{0.5, -1.0});

  // q = 1*0.5 + 2*(-1) = -1.5; keys 1.0 and -2.0; values -0.75 and 1.5.
  const double q = -1.5, k0 = 1.0, k1 = -2.0, v0 = -0.75, v1 = 1.5;
  const double s0 = q * k0, s1 = q * k1;  // scale 1/sqrt(1)
  const double e0 = std::exp(s0), e1 = std::exp(s1);
  const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
  const double att = a0 * v0 + a1 * v1;
  const double r0 = 1.0 + att * 1.0, r1 = 2.0 + att * 0.25;
  auto ln = [](double u0, double u1, double g0, double g1, double b0, double b1, double& o0, double& o1) {
    const double m = 0.5 * (u0 + u1);
    const double var = 0.5 * ((u0 - m) * (u0 - m) + (u1 - m) * (u1 - m));
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    o0 = (u0 - m) * inv * g0 + b0;
    o1 = (u1 - m) * inv * g1 + b1;
  };
  double h0, h1;
  ln(r0, r1, 1.5, 0.5, 0.0, 0.1, h0, h1);
  const double f0 = std::max(0.0, h0 * 0.3 + h1 * 1.1 + 0.1);
  const double f1 = std::max(0.0, h0 * -0.7 + h1 * 0.4 + 0.2);
  double o0, o1;
  ln(h0 + f0, h1 + f1, 2.0, 1.0, -0.5, 0.5, o0, o1);

  const MabResult r = mab_forward(x, y, p);
  CHECK(r.attention.at(0, 0) == doctest::Approx(a0).epsilon(1e-14));
  CHECK(r.attention.at(0, 1) == doctest::Approx(a1).epsilon(1e-14));
  CHECK(r.out.at(0, 0) == doctest::Approx(o0).epsilon(1e-12));
  CHECK(r.out.at(0, 1) == doctest::Approx(o1).epsilon(1e-12));
}

TEST_CASE("temporal stage: row permutation, parameter sharing, duplicated rows") {
  std::mt19937_64 rng(6);
  ModelParams m = init_model(small_config(), 5);
  perturb(m, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor seq = random_tensor({5, 6}, rng, -2, 2);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor a = temporal_stage(seq, m);
    const Tensor b = temporal_stage(permute_time(seq, perm, 1), m);
    CHECK(max_abs_diff(a, b) < 1e-9);
    CHECK(temporal_stage(seq, m) == a);
  }
  CHECK_THROWS_AS(temporal_stage(random_tensor({4, 6}, rng), m), DimensionError);

  // Each row twice: every copy gets half the weight of the original row.
  const Tensor seq = random_tensor({5, 6}, rng);
  Tensor doubled({10, 6});
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 6; ++c) doubled.at(r, c) = seq.at(r / 2, c);
  const MabResult once = mab_forward(m.kernel_temp, seq, m.temporal);
  const MabResult twice = mab_forward(m.kernel_temp, doubled, m.temporal);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(twice.attention.at(0, 2 * j) == doctest::Approx(once.attention.at(0, j) / 2).epsilon(1e-12));
    CHECK(twice.attention.at(0, 2 * j) + twice.attention.at(0, 2 * j + 1) ==
          doctest::Approx(once.attention.at(0, j)).epsilon(1e-12));
  }
  CHECK(max_abs_diff(once.out, twice.out) < 1e-12);
}

TEST_CASE("channel stage: attention rows, permutation, single channel") {
  std::mt19937_64 rng(10);
  ModelParams m = init_model(small_config(), 2);
  perturb(m, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + rng() % 6;
    const Tensor feats = random_tensor({c, 8}, rng, -2, 2);
    const ChannelStageResult a = channel_stage(feats, m);
    double total = 0.0;
    for (double v : a.attention.values()) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor fp = feats;
    for (std::size_t r = 0; r < c; ++r)
      for (std::size_t k = 0; k < 8; ++k) fp.at(r, k) = feats.at(perm[r], k);
    const ChannelStageResult b = channel_stage(fp, m);
    CHECK(max_abs_diff(a.output, b.output) < 1e-12);
    for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(b.attention[j] - a.attention[perm[j]]) < 1e-12);
  }
  const ChannelStageResult one = channel_stage(random_tensor({1, 8}, rng), m);
  CHECK(one.attention[0] == 1.0);
  CHECK_THROWS_AS(channel_stage(random_tensor({3, 7}, rng), m), DimensionError);
}

TEST_CASE("predict: head, range, contracts") {
  std::mt19937_64 rng(12);
  ModelParams m = init_model(small_config(), 3);
  perturb(m, rng);
  const Tensor sample = random_tensor({3 * 5, 6}, rng, -3, 3);
  ModelParams zero = m;
  zero.head_w.fill(0.0);
  zero.head_b[0] = 0.7;
  CHECK(predict(sample, 3, zero).probability == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-15));

  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = random_tensor({3 * 5, 6}, rng, -1e3, 1e3);
    const Prediction p = predict(s, 3, m);
    CHECK(p.probability > 0.0);
    CHECK(p.probability < 1.0);
    CHECK(p.attention.size() == 3);
  }
  CHECK_THROWS_AS(predict(sample, 4, m), DimensionError);

  // One constructor serves any channel count.
  for (std::size_t c : {1, 2, 7}) CHECK_NOTHROW(predict(random_tensor({c * 5, 6}, rng), c, m));
}

TEST_CASE("predict_batch is bitwise equal to per-sample predict") {
  std::mt19937_64 rng(13);
  ModelParams m = init_model(small_config(), 4);
  perturb(m, rng);
  const std::size_t b = 7, c = 3, t = 5;
  const Tensor batch = random_tensor({b * c * t, 6}, rng, -2, 2);
  const BatchPrediction all = predict_batch(batch, b, c, m);
  for (std::size_t i = 0; i < b; ++i) {
    Tensor one({c * t, 6});
    for (std::size_t r = 0; r < c * t; ++r)
      for (std::size_t k = 0; k < 6; ++k) one.at(r, k) = batch.at(i * c * t + r, k);
    const Prediction p = predict(one, c, m);
    CHECK(p.probability == all.probability[i]);
    for (std::size_t j = 0; j < c; ++j) CHECK(p.attention[j] == all.attention.at(i, j));
  }
}

TEST_CASE("network properties: temporal invariance and channel equivariance") {
  std::mt19937_64 rng(14);
  const ModelConfig cfg = small_config();
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams m = init_model(cfg, static_cast<std::uint64_t>(trial));
    perturb(m, rng, 0.3);
    const std::size_t c = 2 + rng() % 4;
    const Tensor s = random_tensor({c * cfg.seq_len, cfg.n_features}, rng, -2, 2);
    const Prediction base = predict(s, c, m);

    std::vector<std::size_t> tp(cfg.seq_len);
    std::iota(tp.begin(), tp.end(), 0);
    std::shuffle(tp.begin(), tp.end(), rng);
    const Prediction pt = predict(permute_time(s, tp, c), c, m);
    CHECK(std::abs(pt.probability - base.probability) <= 1e-9 * std::abs(base.probability));

    std::vector<std::size_t> cp(c);
    std::iota(cp.begin(), cp.end(), 0);
    std::shuffle(cp.begin(), cp.end(), rng);
    const Prediction pc = predict(permute_channels(s, cp, cfg.seq_len), c, m);
    CHECK(std::abs(pc.probability - base.probability) < 1e-12);
    for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(pc.attention[j] - base.attention[cp[j]]) < 1e-12);
  }
}

TEST_CASE("gradients: full network matches finite differences") {
  std::mt19937_64 rng(15);
  const ModelConfig cfg = small_config();
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    ModelParams m = init_model(cfg, static_cast<std::uint64_t>(100 + draw));
    perturb(m, rng, 0.3);
    const std::size_t b = 2, c = 3;
    const Tensor x = random_tensor({b * c * cfg.seq_len, cfg.n_features}, rng, -2, 2);
    const std::vector<double> y{1.0, 0.0};
    std::vector<Tensor> inputs;
    for (const Tensor* t : m.trainable()) inputs.push_back(*t);
    inputs.push_back(x);
    auto f = [&](Graph& g, std::span<const Var> in) { return oracle::network_loss(g, in, cfg, b, c, y); };
    worst = std::max(worst, finite_diff_check(f, inputs, 1e-5));
  }
  INFO(worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients: kernel_temp at default sizes and no dead parameters") {
  std::mt19937_64 rng(16);
  const ModelConfig cfg;
  ModelParams m = init_model(cfg, 21);
  perturb(m, rng, 0.05);
  const std::size_t b = 2, c = 3;
  const Tensor x = random_tensor({b * c * cfg.seq_len, cfg.n_features}, rng, -2, 2);
  const std::vector<double> y{1.0, 0.0};

  auto f = [&](Graph& g, Var kernel) {
    ModelVars v = bind(g, m, false);
    v.kernel_temp = kernel;
    return batch_loss(v, cfg, g.constant(x), b, c, y);
  };
  CHECK(finite_diff_check(f, m.kernel_temp, 1e-5) < 1e-4);

  Graph g;
  ModelVars v = bind(g, m, true);
  Var loss = batch_loss(v, cfg, g.constant(x), b, c, y);
  g.backward(loss);
  const auto names = ModelParams::trainable_names();
  for (std::size_t i = 0; i < v.all.size(); ++i) {
    double norm = 0.0;
    for (double d : g.grad(v.all[i]).values()) norm += d * d;
    INFO(names[i]);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("attention accumulator") {
  std::mt19937_64 rng(17);
  AttentionAccumulator single(3), repeated(3);
  const std::vector<double> row{0.2, 0.5, 0.3};
  single.accumulate(row);
  for (int i = 0; i < 9; ++i) repeated.accumulate(row);
  const auto a = single.finalize(), b = repeated.finalize();
  for (std::size_t c = 0; c < 3; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-15));

  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r(5);
    double total = 0.0;
    for (auto& v : r) total += (v = std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    for (auto& v : r) v /= total;
    rows.push_back(r);
  }
  AttentionAccumulator fwd(5), rev(5), left(5), right(5);
  for (const auto& r : rows) fwd.accumulate(r);
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) rev.accumulate(*it);
  for (std::size_t i = 0; i < rows.size(); ++i) (i < 77 ? left : right).accumulate(rows[i]);
  left.merge(right);
  std::vector<double> brute(5, 0.0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 5; ++c) brute[c] += r[c] / 200.0;
  const auto mf = fwd.mean(), mr = rev.mean(), mm = left.mean();
  double total = 0.0;
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(std::abs(mf[c] - mr[c]) < 1e-12);
    CHECK(std::abs(mf[c] - mm[c]) < 1e-12);
    CHECK(std::abs(mf[c] - brute[c]) < 1e-12);
    total += mf[c];
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(fwd.count() == 200);

  AttentionAccumulator flat(4);
  flat.accumulate(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  for (double v : flat.finalize()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  AttentionAccumulator skew(3);
  skew.accumulate(std::vector<double>{0.9, 0.05, 0.05});
  const auto s = skew.finalize();
  const double e9 = std::exp(0.9), e05 = std::exp(0.05), z = e9 + 2 * e05;
  CHECK(s[0] == doctest::Approx(e9 / z).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(e05 / z).epsilon(1e-14));
  CHECK(s[0] + s[1] + s[2] == doctest::Approx(1.0).epsilon(1e-15));
  for (double v : s) CHECK(v > 0.0);

  // Temperature t divides the mean before the softmax.
  const auto sharp = skew.finalize(1.0 / 3.0);
  const double f9 = std::exp(2.7), f05 = std::exp(0.15);
  CHECK(sharp[0] == doctest::Approx(f9 / (f9 + 2 * f05)).epsilon(1e-14));

  CHECK_THROWS_AS(AttentionAccumulator(3).finalize(), StateError);
  CHECK_THROWS_AS(skew.accumulate(std::vector<double>{0.5, 0.5}), DimensionError);
  CHECK_THROWS_AS(skew.accumulate(std::vector<double>{0.5, 0.4, 0.5}), NumericError);
}

TEST_CASE("class-balanced attention mean weighs both classes equally") {
  AttentionAccumulator inter(3), pre(3);
  for (int i = 0; i < 9; ++i) inter.accumulate(std::vector<double>{0.2, 0.4, 0.4});
  pre.accumulate(std::vector<double>{0.8, 0.1, 0.1});
  const auto m = class_balanced_mean(inter, pre);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(0.25).epsilon(1e-15));
  // an empty class falls back to the other one
  CHECK(class_balanced_mean(AttentionAccumulator(3), pre) == pre.mean());
  CHECK(class_balanced_mean(inter, AttentionAccumulator(3)) == inter.mean());
  CHECK_THROWS_AS(class_balanced_mean(AttentionAccumulator(3), AttentionAccumulator(3)), StateError);
  AttentionAccumulator narrow(2);
  narrow.accumulate(std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(class_balanced_mean(narrow, pre), DimensionError);
  // attention_softmax agrees with finalize
  CHECK(attention_softmax(inter.mean(), 0.5) == inter.finalize(0.5));
}

TEST_CASE("select_channels: failure, dominance, brute-force filter") {
  std::vector<double> near(18, 1.0 / 18);
  for (std::size_t c = 0; c < 18; ++c) near[c] += (c % 2 ? 1 : -1) * 0.05 / 18;
  const auto failed = select_channels(near);
  CHECK_FALSE(failed.ok());
  CHECK(failed.channels.empty());

  std::vector<double> peaked(18, 0.1 / 16);
  peaked[0] = 0.6;
  peaked[1] = 0.3;
  const auto sel = select_channels(peaked);
  CHECK(sel.ok());
  CHECK(sel.channels == std::vector<std::size_t>{0, 1});

  std::mt19937_64 rng(18);
  const SelectionPolicy policy;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t c = 2 + rng() % 17;
    std::vector<double> att(c);
    double total = 0.0;
    for (auto& v : att) total += (v = std::pow(std::uniform_real_distribution<double>(0, 1)(rng), 1 + trial % 5));
    for (auto& v : att) v /= total;
    const auto got = select_channels(att, policy);

    std::vector<std::size_t> above;
    for (std::size_t i = 0; i < c; ++i)
      if (att[i] >= 1.5 / static_cast<double>(c)) above.push_back(i);
    std::sort(above.begin(), above.end(), [&](auto a, auto b) { return att[a] > att[b]; });
    if (above.size() > 5) above.resize(5);
    std::sort(above.begin(), above.end());
    const double top = *std::max_element(att.begin(), att.end());
    const bool fail = above.empty() || top < 1.2 / static_cast<double>(c);
    CHECK(got.ok() == !fail);
    if (!fail) CHECK(got.channels == above);
  }
  CHECK_THROWS_AS(select_channels(std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("checkpoint round trip and rejection") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(19);
  Checkpoint ck;
  ck.params = init_model({}, 7);
  perturb(ck.params, rng, 0.1);
  ck.params.input_mean[3] = 1.25;
  ck.params.input_scale[5] = 0.125;
  ck.channels = {12, 14};
  ck.channel_labels = {"P4-O2", "FZ-CZ"};
  ck.metadata["seed"] = "7";
  save_checkpoint(dir / "m.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt", ModelConfig{});
  const auto a = std::as_const(ck.params).trainable();
  const auto b = std::as_const(back.params).trainable();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  CHECK(back.params.input_mean == ck.params.input_mean);
  CHECK(back.params.input_scale == ck.params.input_scale);
  CHECK(back.channels == ck.channels);
  CHECK(back.channel_labels == ck.channel_labels);
  CHECK(back.metadata == ck.metadata);

  ModelConfig other;
  other.dim_output = 32;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", other), ConfigError);

  // A shape that disagrees with the echoed config is rejected.
  std::ifstream in(dir / "m.ckpt");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  const auto pos = text.find("tensor head_w 64 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 18, "tensor head_w 32 2");
  std::ofstream(dir / "bad.ckpt") << text;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ConfigError);
  std::ofstream(dir / "junk.ckpt") << "hello\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), ParseError);
}

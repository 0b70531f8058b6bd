#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "seizset/errors.hpp"
#include "seizset/features.hpp"
#include "../support/oracles.hpp"
#include "test_util.hpp"

using namespace seizset;
using seizset::testing::TempDir;
using seizset::oracle::naive_periodogram;
using seizset::oracle::normwise_error;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> periodogram(const std::vector<double>& x, int fs) {
  Periodogram pg(x.size(), fs);
  std::vector<double> out(pg.bin_count());
  pg.compute(x, out);
  return out;
}

std::vector<double> sinusoid(double hz, double amplitude, std::size_t n, int fs, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amplitude * std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs + phase);
  return x;
}

EegRecord noise_record(std::size_t channels, double seconds, std::uint64_t seed, int fs = 256) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 20.0);
  EegRecord r;
  r.sampling_rate = fs;
  for (std::size_t c = 0; c < channels; ++c) r.channel_labels.push_back("C" + std::to_string(c));
  r.samples.assign(channels, std::vector<double>(static_cast<std::size_t>(seconds * fs)));
  for (auto& ch : r.samples)
    for (auto& v : ch) v = g(rng);
  return r;
}

}  // namespace

TEST_CASE("segment: window counts and boundaries") {
  CHECK(segment(noise_record(1, 10, 1)).size() == 9);
  const auto w38 = segment(noise_record(1, 38, 1));
  CHECK(w38.size() == 37);
  CHECK(w38.back().start_s == 36.0);
  const auto w2 = segment(noise_record(1, 2, 1));
  REQUIRE(w2.size() == 1);
  CHECK(w2[0].start_sample == 0);
  CHECK(w2[0].length == 512);
  CHECK_THROWS_AS(segment(noise_record(1, 1.5, 1)), SegmentationError);
  // Window k covers [k, k + 2) seconds.
  for (std::size_t k = 0; k < w38.size(); ++k) CHECK(w38[k].start_sample == k * 256);
}

TEST_CASE("psd: zero signal gives a zero spectrum") {
  for (double v : periodogram(std::vector<double>(512, 0.0), 256)) CHECK(v == 0.0);
  // A constant is removed by the mean subtraction.
  for (double v : periodogram(std::vector<double>(512, 3.0), 256)) CHECK(std::abs(v) < 1e-20);
}

TEST_CASE("psd: 10 Hz sinusoid peaks at 10 Hz with total power near the variance") {
  const auto x = sinusoid(10.0, 1.0, 512, 256, 0.3);
  const auto p = periodogram(x, 256);
  const auto f = oracle::frequency_grid(256, 512);
  const auto peak = std::max_element(p.begin(), p.end()) - p.begin();
  CHECK(f[static_cast<std::size_t>(peak)] == 10.0);
  double total = 0.0;
  for (double v : p) total += v * (256.0 / 512.0);
  CHECK(total == doctest::Approx(0.5).epsilon(0.01));
  CHECK(normwise_error(p, naive_periodogram(x, 256)) < 1e-9);
}

TEST_CASE("psd: FFT path matches the naive DFT on random windows") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 30.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Mostly the production 2-s length, plus lengths that need zero padding.
    const std::size_t n = trial % 5 == 0 ? 300 + rng() % 200 : 512;
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng) + 5.0;
    const auto fast = periodogram(x, 256);
    const auto slow = naive_periodogram(x, 256);
    REQUIRE(fast.size() == slow.size());
    worst = std::max(worst, normwise_error(fast, slow));
    for (double v : fast) CHECK(v >= 0.0);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("psd: record-level spectrum and grid") {
  const EegRecord rec = noise_record(3, 4, 5);
  const auto windows = segment(rec);
  const Psd p = psd(rec, windows[1]);
  CHECK(p.window_start_s == 1.0);
  REQUIRE(p.power.size() == 3);
  CHECK(p.freqs.size() == 257);
  CHECK(p.freqs[1] == 0.5);
  CHECK(p.freqs.back() == 128.0);
  std::vector<double> slice(rec.samples[2].begin() + 256, rec.samples[2].begin() + 768);
  CHECK(p.power[2] == periodogram(slice, 256));
}

TEST_CASE("masks: flat spectrum, idempotence") {
  Psd p;
  p.freqs = oracle::frequency_grid(512, 512);  // 0..256 Hz at 1 Hz
  p.power.assign(1, std::vector<double>(p.freqs.size(), 1.0));
  const Psd once = apply_band_masks(p);
  for (std::size_t k = 0; k < p.freqs.size(); ++k) {
    const double f = p.freqs[k];
    const bool masked = (f >= 57.0 && f <= 63.0) || f > 128.0;
    CHECK(once.power[0][k] == (masked ? 0.0 : 1.0));
  }
  const Psd twice = apply_band_masks(once);
  CHECK(twice.power == once.power);
}

TEST_CASE("masks: a 60 Hz line disappears from gamma2") {
  const auto x = sinusoid(60.0, 10.0, 512, 256);
  const auto f = oracle::frequency_grid(256, 512);
  auto raw = periodogram(x, 256);
  const auto unmasked = band_powers(raw, f);
  apply_band_masks(raw, f);
  const auto masked = band_powers(raw, f);

  // Oracle: naive DFT, the mask by hand, then the gamma2 sum over (50, 70].
  auto oracle = naive_periodogram(x, 256);
  double gamma2 = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] >= 57.0 && f[k] <= 63.0) oracle[k] = 0.0;
    if (f[k] > 50.0 && f[k] <= 70.0) gamma2 += oracle[k];
  }
  CHECK(unmasked[4] > 1.0);
  CHECK(masked[4] < -20.0);
  CHECK(std::exp(masked[4]) == doctest::Approx(gamma2 + 1e-12).epsilon(1e-6));
  // Neighbouring bands see only leakage either way.
  CHECK(masked[1] == doctest::Approx(unmasked[1]));
  CHECK(masked[2] == doctest::Approx(unmasked[2]));
}

TEST_CASE("band_powers: uniform spectrum gives bin-count ratios") {
  const auto f = oracle::frequency_grid(256, 512);
  const std::vector<double> flat(f.size(), 1.0);
  const auto v = band_powers(flat, f);
  REQUIRE(v.size() == 44);
  // Bins at k/2 Hz with lo < k/2 <= hi: 2 * (hi - lo) of them.
  const double edges[9] = {4, 8, 13, 30, 50, 70, 90, 110, 128};
  double total = 0.0;
  for (int b = 0; b < 8; ++b) total += 2 * (edges[b + 1] - edges[b]);
  CHECK(total == 248.0);
  for (int b = 0; b < 8; ++b) {
    const double n = 2 * (edges[b + 1] - edges[b]);
    CHECK(v[static_cast<std::size_t>(b)] == doctest::Approx(std::log(n)).epsilon(1e-12));
    CHECK(v[static_cast<std::size_t>(8 + b)] == doctest::Approx(std::log(n / total)).epsilon(1e-12));
  }
}

TEST_CASE("band_powers: ratios are exact differences, relative powers nonpositive, all finite") {
  const auto f = oracle::frequency_grid(256, 512);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(f.size());
    for (auto& v : p) v = trial % 4 == 0 ? 0.0 : std::pow(u(rng), 4.0) * 1e3;
    if (trial % 7 == 0)
      for (std::size_t k = 0; k < 40; ++k) p[k] = 0.0;  // empty low bands
    const auto v = band_powers(p, f);
    std::size_t k = 16;
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(v[8 + i] <= 0.0);
      for (std::size_t j = i + 1; j < 8; ++j) CHECK(v[k++] == v[i] - v[j]);
    }
    for (double x : v) CHECK(std::isfinite(x));
  }
}

TEST_CASE("band_powers: 10 Hz sinusoid lands in alpha") {
  const auto f = oracle::frequency_grid(256, 512);
  auto p = naive_periodogram(sinusoid(10.0, 5.0, 512, 256, 1.0), 256);
  apply_band_masks(p, f);
  const auto v = band_powers(p, f);
  CHECK(std::max_element(v.begin(), v.begin() + 8) - v.begin() == 1);
}

TEST_CASE("band edges partition (4, 128] half-open") {
  const auto f = oracle::frequency_grid(256, 512);
  const auto& bands = default_bands();
  for (double hz : f) {
    int owners = 0;
    for (const auto& b : bands) owners += (hz > b.lo_hz && hz <= b.hi_hz) ? 1 : 0;
    CHECK(owners == ((hz > 4.0 && hz <= 128.0) ? 1 : 0));
  }
  CHECK(band_by_name("theta").hi_hz == band_by_name("alpha").lo_hz);
}

TEST_CASE("extract_timeline: shape, channel independence, threading") {
  const EegRecord rec = noise_record(4, 60, 21);
  const FeatureTimeline tl = extract_timeline(rec);
  CHECK(tl.n_times == 59);
  CHECK(tl.n_channels == 4);
  CHECK(tl.n_features == 44);
  CHECK(tl.features.size() == 59 * 4 * 44);
  CHECK(tl.timestamp(0) == 0.0);
  CHECK(tl.timestamp(58) == 58.0);

  EegRecord permuted = rec;
  const std::size_t order[4] = {2, 0, 3, 1};
  for (std::size_t c = 0; c < 4; ++c) {
    permuted.samples[c] = rec.samples[order[c]];
    permuted.channel_labels[c] = rec.channel_labels[order[c]];
  }
  const FeatureTimeline tp = extract_timeline(permuted);
  for (std::size_t t = 0; t < tl.n_times; ++t)
    for (std::size_t c = 0; c < 4; ++c) {
      const auto a = tp.at(t, c), b = tl.at(t, order[c]);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }

  for (std::size_t c = 0; c < 4; ++c) {
    EegRecord single;
    single.sampling_rate = rec.sampling_rate;
    single.channel_labels = {rec.channel_labels[c]};
    single.samples = {rec.samples[c]};
    const FeatureTimeline ts = extract_timeline(single);
    bool same = true;
    for (std::size_t t = 0; t < tl.n_times; ++t) {
      const auto a = ts.at(t, 0), b = tl.at(t, c);
      same = same && std::equal(a.begin(), a.end(), b.begin());
    }
    CHECK(same);
  }

  const FeatureTimeline threaded = extract_timeline(rec, {}, 3);
  CHECK(threaded.features == tl.features);
}

TEST_CASE("feature cache: CSV round trip is bit-identical") {
  TempDir dir("cache");
  const FeatureTimeline tl = extract_timeline(noise_record(3, 12, 8));
  write_feature_cache(dir / "f.csv", tl);
  const FeatureTimeline back = read_feature_cache(dir / "f.csv");
  CHECK(back.n_times == tl.n_times);
  CHECK(back.n_channels == tl.n_channels);
  CHECK(back.n_features == 44);
  CHECK(back.channel_labels == tl.channel_labels);
  CHECK(back.features == tl.features);
  CHECK(back.start_s == 0.0);
}

namespace {

struct AlphaContrast {
  std::vector<double> diff;  // preictal minus interictal mean, per channel
};

AlphaContrast alpha_contrast(double gain, std::uint64_t seed) {
  SynthSpec spec;
  spec.n_channels = 4;
  spec.duration_s = 900;
  spec.seizure_times = {700};
  spec.preictal_s = 300;
  spec.horizon_s = 30;
  spec.informative_channels = {2};
  spec.preictal_gain = gain;
  spec.rng_seed = seed;
  const SynthOutput s = synth_generate(spec);
  const FeatureTimeline tl = extract_timeline(s.record);
  AlphaContrast out;
  for (std::size_t c = 0; c < 4; ++c) {
    double pre = 0, inter = 0;
    int npre = 0, ninter = 0;
    for (std::size_t t = 0; t < tl.n_times; ++t) {
      const double start = tl.timestamp(t);
      const double alpha = tl.at(t, c)[1];
      if (start >= 370 && start + 2 <= 670) {
        pre += alpha;
        ++npre;
      } else if (start + 2 <= 360) {
        inter += alpha;
        ++ninter;
      }
    }
    out.diff.push_back(pre / npre - inter / ninter);
  }
  return out;
}

}  // namespace

TEST_CASE("synth + features: gain 4 raises planted alpha power by about log 4") {
  const AlphaContrast a = alpha_contrast(4.0, 5);
  CHECK(a.diff[2] == doctest::Approx(std::log(4.0)).epsilon(0.15));
  for (std::size_t c : {0, 1, 3}) CHECK(std::abs(a.diff[c]) < 0.15);

  // Null injection: no channel separates.
  const AlphaContrast null = alpha_contrast(1.0, 5);
  for (double d : null.diff) CHECK(std::abs(d) < 0.15);
}

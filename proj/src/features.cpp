#include "seizset/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "seizset/errors.hpp"

namespace seizset {

const char* to_string(Period p) {
  switch (p) {
    case Period::interictal: return "interictal";
    case Period::excluded: return "excluded";
    case Period::preictal: return "preictal";
    case Period::ictal: return "ictal";
  }
  return "?";
}

Period period_from_string(std::string_view s) {
  if (s == "interictal") return Period::interictal;
  if (s == "excluded") return Period::excluded;
  if (s == "preictal") return Period::preictal;
  if (s == "ictal") return Period::ictal;
  throw ParseError("unknown period label '" + std::string(s) + "'");
}

std::vector<Window> segment(const EegRecord& record, const FeatureConfig& config) {
  record.validate();
  const auto length = static_cast<std::size_t>(std::llround(config.window_s * record.sampling_rate));
  const auto hop = static_cast<std::size_t>(std::llround(config.hop_s * record.sampling_rate));
  if (length == 0 || hop == 0) throw SegmentationError("window and hop must cover at least one sample");
  const std::size_t n = record.sample_count();
  if (n < length) {
    throw SegmentationError("record of " + std::to_string(record.duration_s()) + " s is shorter than one " +
                            std::to_string(config.window_s) + " s window");
  }
  std::vector<Window> windows;
  for (std::size_t start = 0; start + length <= n; start += hop) {
    windows.push_back({start, length, static_cast<double>(start) / record.sampling_rate});
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Periodogram

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Periodogram::Impl {
  std::size_t length = 0;
  std::size_t nfft = 0;
  int rate = 0;
  std::vector<double> taper;
  double norm = 0.0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (plan) fftw_destroy_plan(plan);
    if (in) fftw_free(in);
    if (out) fftw_free(out);
  }
};

Periodogram::Periodogram(std::size_t window_length, int sampling_rate) : impl_(std::make_unique<Impl>()) {
  if (window_length < 2 || sampling_rate <= 0) throw SegmentationError("periodogram needs >= 2 samples and fs > 0");
  Impl& p = *impl_;
  p.length = window_length;
  p.rate = sampling_rate;
  p.nfft = 1;
  while (p.nfft < window_length) p.nfft <<= 1;
  p.taper.resize(window_length);
  double energy = 0.0;
  for (std::size_t i = 0; i < window_length; ++i) {
    p.taper[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / window_length);
    energy += p.taper[i] * p.taper[i];
  }
  p.norm = 1.0 / (sampling_rate * energy);
  std::lock_guard lock(planner_mutex());
  p.in = fftw_alloc_real(p.nfft);
  p.out = fftw_alloc_complex(p.nfft / 2 + 1);
  p.plan = fftw_plan_dft_r2c_1d(static_cast<int>(p.nfft), p.in, p.out, FFTW_ESTIMATE);
}

Periodogram::~Periodogram() = default;
Periodogram::Periodogram(Periodogram&&) noexcept = default;
Periodogram& Periodogram::operator=(Periodogram&&) noexcept = default;

std::size_t Periodogram::fft_length() const noexcept { return impl_->nfft; }

std::vector<double> Periodogram::frequencies() const {
  std::vector<double> f(bin_count());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = static_cast<double>(k) * impl_->rate / impl_->nfft;
  return f;
}

void Periodogram::compute(std::span<const double> window, std::span<double> power) {
  Impl& p = *impl_;
  if (window.size() != p.length) {
    throw DimensionError("periodogram expects " + std::to_string(p.length) + " samples, got " +
                         std::to_string(window.size()));
  }
  if (power.size() != bin_count()) throw DimensionError("periodogram output has the wrong bin count");
  double mu = 0.0;
  for (double v : window) mu += v;
  mu /= static_cast<double>(p.length);
  for (std::size_t i = 0; i < p.length; ++i) p.in[i] = (window[i] - mu) * p.taper[i];
  for (std::size_t i = p.length; i < p.nfft; ++i) p.in[i] = 0.0;
  fftw_execute(p.plan);
  const std::size_t bins = bin_count();
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = p.out[k][0], im = p.out[k][1];
    double v = (re * re + im * im) * p.norm;
    if (k != 0 && !(p.nfft % 2 == 0 && k == p.nfft / 2)) v *= 2.0;
    power[k] = v;
  }
}

Psd psd(const EegRecord& record, const Window& window) {
  record.validate();
  if (window.start_sample + window.length > record.sample_count()) throw SegmentationError("window exceeds record");
  Periodogram pg(window.length, record.sampling_rate);
  Psd out;
  out.freqs = pg.frequencies();
  out.window_start_s = window.start_s;
  for (const auto& channel : record.samples) {
    std::vector<double> power(pg.bin_count());
    pg.compute(std::span<const double>(channel).subspan(window.start_sample, window.length), power);
    out.power.push_back(std::move(power));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masks and band powers

void apply_band_masks(std::span<double> power, std::span<const double> freqs, const FeatureConfig& config) {
  for (std::size_t k = 0; k < power.size(); ++k) {
    const double f = freqs[k];
    if ((f >= config.notch_lo_hz && f <= config.notch_hi_hz) || f > config.max_hz) power[k] = 0.0;
  }
}

Psd apply_band_masks(Psd p, const FeatureConfig& config) {
  for (auto& channel : p.power) apply_band_masks(channel, p.freqs, config);
  return p;
}

void band_powers(std::span<const double> power, std::span<const double> freqs, const FeatureConfig& config,
                 std::span<double> out) {
  const std::size_t nb = config.bands.size();
  if (out.size() != config.feature_count()) throw DimensionError("band_powers output has the wrong width");
  if (power.size() != freqs.size()) throw DimensionError("band_powers: power and frequency grids differ");
  std::vector<double> sums(nb, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const Band& band = config.bands[b];
    for (std::size_t k = 0; k < power.size(); ++k) {
      if (freqs[k] > band.lo_hz && freqs[k] <= band.hi_hz) sums[b] += power[k];
    }
    total += sums[b];
  }
  const double eps = config.epsilon;
  for (std::size_t b = 0; b < nb; ++b) {
    out[b] = std::log(sums[b] + eps);
    out[nb + b] = std::log((sums[b] + eps) / (total + eps));
  }
  std::size_t k = 2 * nb;
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = i + 1; j < nb; ++j) out[k++] = out[i] - out[j];
}

std::vector<double> band_powers(std::span<const double> power, std::span<const double> freqs,
                                const FeatureConfig& config) {
  std::vector<double> out(config.feature_count());
  band_powers(power, freqs, config, out);
  return out;
}

// ---------------------------------------------------------------------------
// Timeline

FeatureTimeline extract_timeline(const EegRecord& record, const FeatureConfig& config, unsigned threads) {
  const std::vector<Window> windows = segment(record, config);
  FeatureTimeline tl;
  tl.n_times = windows.size();
  tl.n_channels = record.channel_count();
  tl.n_features = config.feature_count();
  tl.start_s = 0.0;
  tl.channel_labels = record.channel_labels;
  tl.features.assign(tl.n_times * tl.n_channels * tl.n_features, 0.0);
  tl.labels.assign(tl.n_times, Period::interictal);

  const std::size_t length = windows.front().length;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(windows.size())));

  auto work = [&](std::size_t begin, std::size_t end) {
    Periodogram pg(length, record.sampling_rate);
    const std::vector<double> freqs = pg.frequencies();
    std::vector<double> power(pg.bin_count());
    for (std::size_t w = begin; w < end; ++w) {
      for (std::size_t c = 0; c < tl.n_channels; ++c) {
        pg.compute(std::span<const double>(record.samples[c]).subspan(windows[w].start_sample, length), power);
        apply_band_masks(power, freqs, config);
        band_powers(power, freqs, config, tl.at(w, c));
      }
    }
  };

  if (threads == 1) {
    work(0, windows.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (windows.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(windows.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  return tl;
}

void write_feature_cache(const std::filesystem::path& path, const FeatureTimeline& tl) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp,channel";
  for (std::size_t f = 0; f < tl.n_features; ++f) out << ",f" << f;
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < tl.n_times; ++t) {
    for (std::size_t c = 0; c < tl.n_channels; ++c) {
      auto r = std::to_chars(buf, buf + sizeof buf, tl.timestamp(t));
      out << std::string_view(buf, r.ptr - buf) << ',' << tl.channel_labels[c];
      for (double v : tl.at(t, c)) {
        r = std::to_chars(buf, buf + sizeof buf, v);
        out << ',' << std::string_view(buf, r.ptr - buf);
      }
      out << '\n';
    }
  }
}

FeatureTimeline read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty feature cache");
  const auto width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;

  FeatureTimeline tl;
  tl.n_features = width;
  std::vector<double> stamps;
  std::size_t line_no = 1;
  auto parse = [&](std::string_view cell, double& v) {
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || p != cell.data() + cell.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + std::string(cell) + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != width + 2) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    double stamp = 0.0;
    parse(cells[0], stamp);
    if (stamps.empty() || stamp != stamps.back()) {
      if (!stamps.empty() && tl.n_channels == 0) tl.n_channels = tl.channel_labels.size();
      stamps.push_back(stamp);
    }
    if (stamps.size() == 1) tl.channel_labels.emplace_back(cells[1]);
    for (std::size_t f = 0; f < width; ++f) {
      double v = 0.0;
      parse(cells[f + 2], v);
      tl.features.push_back(v);
    }
  }
  if (stamps.empty()) throw ParseError(path.string() + ": no feature rows");
  tl.n_channels = tl.channel_labels.size();
  tl.n_times = stamps.size();
  if (tl.features.size() != tl.n_times * tl.n_channels * tl.n_features) {
    throw ParseError(path.string() + ": every timestamp needs one row per channel");
  }
  for (std::size_t k = 1; k < stamps.size(); ++k) {
    if (stamps[k] != stamps[k - 1] + 1.0) throw ParseError(path.string() + ": timestamps are not on a 1-s grid");
  }
  tl.start_s = stamps.front();
  tl.labels.assign(tl.n_times, Period::interictal);
  return tl;
}

}  // namespace seizset

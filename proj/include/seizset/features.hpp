#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seizset/ingest.hpp"

namespace seizset {

/// Per-second period label. Declaration order is the labeling precedence,
/// lowest first.
enum class Period : unsigned char { interictal = 0, excluded = 1, preictal = 2, ictal = 3 };

const char* to_string(Period p);
Period period_from_string(std::string_view s);

struct FeatureConfig {
  double window_s = 2.0;
  double hop_s = 1.0;
  double notch_lo_hz = 57.0;
  double notch_hi_hz = 63.0;
  double max_hz = 128.0;
  std::vector<Band> bands = default_bands();
  double epsilon = 1e-12;

  /// 2n + n(n-1)/2 for n bands; 44 for the default eight.
  std::size_t feature_count() const noexcept {
    const std::size_t n = bands.size();
    return 2 * n + n * (n - 1) / 2;
  }
};

/// One analysis window: samples [start_sample, start_sample + length).
struct Window {
  std::size_t start_sample = 0;
  std::size_t length = 0;
  double start_s = 0.0;
};

/// Windows of `window_s` seconds at `hop_s` hop. A record of integer duration
/// D seconds yields D - 1 windows at the default settings.
std::vector<Window> segment(const EegRecord& record, const FeatureConfig& config = {});

struct Psd {
  std::vector<double> freqs;               ///< ascending, step fs / n_fft
  std::vector<std::vector<double>> power;  ///< channels x bins, one-sided density
  double window_start_s = 0.0;
};

/// Hann-tapered one-sided periodogram of a single window: mean removal,
/// taper, zero padding to the next power of two, |FFT|^2 / (fs * sum(w^2)),
/// interior bins doubled.
///
/// Holds an FFT plan and scratch buffers; one instance per thread.
class Periodogram {
 public:
  Periodogram(std::size_t window_length, int sampling_rate);
  ~Periodogram();
  Periodogram(Periodogram&&) noexcept;
  Periodogram& operator=(Periodogram&&) noexcept;

  std::size_t fft_length() const noexcept;
  std::size_t bin_count() const noexcept { return fft_length() / 2 + 1; }
  std::vector<double> frequencies() const;
  /// Writes bin_count() values into `power`.
  void compute(std::span<const double> window, std::span<double> power);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Periodogram of every channel of `record` over one window.
Psd psd(const EegRecord& record, const Window& window);

/// Zeroes bins in [notch_lo, notch_hi] and above max_hz.
Psd apply_band_masks(Psd p, const FeatureConfig& config = {});
void apply_band_masks(std::span<double> power, std::span<const double> freqs, const FeatureConfig& config = {});

/// Absolute log band powers, relative log powers against the union of all
/// bands, then pairwise differences of absolute powers for i < j. Bands are
/// half-open (lo, hi].
std::vector<double> band_powers(std::span<const double> power, std::span<const double> freqs,
                                const FeatureConfig& config = {});
void band_powers(std::span<const double> power, std::span<const double> freqs, const FeatureConfig& config,
                 std::span<double> out);

/// Per-channel band-power features on a 1-s grid.
struct FeatureTimeline {
  std::size_t n_times = 0;
  std::size_t n_channels = 0;
  std::size_t n_features = 0;
  /// Timestamp of row k is start_s + k (window start, record time).
  double start_s = 0.0;
  std::vector<std::string> channel_labels;
  /// time x channel x feature
  std::vector<double> features;
  std::vector<Period> labels;

  std::span<const double> at(std::size_t t, std::size_t c) const {
    return std::span<const double>(features).subspan((t * n_channels + c) * n_features, n_features);
  }
  std::span<double> at(std::size_t t, std::size_t c) {
    return std::span<double>(features).subspan((t * n_channels + c) * n_features, n_features);
  }
  double timestamp(std::size_t k) const noexcept { return start_s + static_cast<double>(k); }
};

/// segment -> psd -> mask -> band_powers for every window and channel. Work
/// is split across `threads` workers; output order does not depend on it.
/// Labels default to interictal until the dataset labeler assigns them.
FeatureTimeline extract_timeline(const EegRecord& record, const FeatureConfig& config = {}, unsigned threads = 1);

/// Feature cache: CSV with columns timestamp,channel,f0..f{n-1} written at
/// round-trip precision.
void write_feature_cache(const std::filesystem::path& path, const FeatureTimeline& timeline);
FeatureTimeline read_feature_cache(const std::filesystem::path& path);

}  // namespace seizset

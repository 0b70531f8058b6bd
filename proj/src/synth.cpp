#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "seizset/errors.hpp"
#include "seizset/ingest.hpp"

namespace seizset {

const std::vector<Band>& default_bands() {
  static const std::vector<Band> bands{
      {"theta", 4, 8},     {"alpha", 8, 13},    {"beta", 13, 30},    {"gamma1", 30, 50},
      {"gamma2", 50, 70},  {"gamma3", 70, 90},  {"gamma4", 90, 110}, {"gamma5", 110, 128},
  };
  return bands;
}

const Band& band_by_name(std::string_view name) {
  for (const auto& b : default_bands())
    if (b.name == name) return b;
  throw SpecError("unknown band '" + std::string(name) + "'");
}

double ar1_band_power(double noise_sd, double pole, int sampling_rate, double lo_hz, double hi_hz) {
  // One-sided density 2 s^2 / (fs |1 - a e^{-iw}|^2), integrated with the
  // midpoint rule.
  const int steps = 20000;
  const double df = (hi_hz - lo_hz) / steps;
  const double fs = sampling_rate;
  double total = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double f = lo_hz + (i + 0.5) * df;
    const double w = 2.0 * std::numbers::pi * f / fs;
    const double denom = 1.0 - 2.0 * pole * std::cos(w) + pole * pole;
    total += 2.0 * noise_sd * noise_sd / (fs * denom) * df;
  }
  return total;
}

void SynthSpec::validate() const {
  if (n_channels == 0) throw SpecError("synthetic record needs at least one channel");
  if (sampling_rate <= 0) throw SpecError("sampling rate must be positive");
  if (duration_s < 38.0) throw SpecError("synthetic record must be at least 38 s long");
  if (!(preictal_gain >= 1.0)) throw SpecError("preictal gain must be >= 1");
  if (!(noise_level > 0.0)) throw SpecError("noise level must be positive");
  if (!(std::abs(ar_coefficient) < 1.0)) throw SpecError("AR coefficient must lie in (-1, 1)");
  if (!channel_labels.empty() && channel_labels.size() != n_channels) {
    throw SpecError("channel label count does not match channel count");
  }
  for (auto c : informative_channels) {
    if (c >= n_channels) throw SpecError("informative channel " + std::to_string(c) + " out of range");
  }
  const Band& band = band_by_name(preictal_band);
  if (band.hi_hz * 2.0 > sampling_rate) throw SpecError("preictal band exceeds the Nyquist frequency");
  double previous_end = -1.0;
  for (double onset : seizure_times) {
    if (onset - horizon_s - preictal_s < 0.0) {
      throw SpecError("seizure at " + std::to_string(onset) + " s leaves no room for its preictal window");
    }
    if (onset + seizure_duration_s > duration_s) {
      throw SpecError("seizure at " + std::to_string(onset) + " s does not fit in the record");
    }
    if (onset < previous_end) throw SpecError("seizure times must be increasing and non-overlapping");
    previous_end = onset + seizure_duration_s;
  }
}

SynthOutput synth_generate(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sampling_rate));
  const double fs = spec.sampling_rate;
  const double stationary_sd = spec.noise_level / std::sqrt(1.0 - spec.ar_coefficient * spec.ar_coefficient);

  SynthOutput out;
  EegRecord& rec = out.record;
  rec.sampling_rate = spec.sampling_rate;
  rec.start_time = 0.0;
  for (std::size_t c = 0; c < spec.n_channels; ++c) {
    rec.channel_labels.push_back(spec.channel_labels.empty() ? "CH" + std::to_string(c) : spec.channel_labels[c]);
  }
  rec.samples.assign(spec.n_channels, std::vector<double>(n, 0.0));

  const Band& band = band_by_name(spec.preictal_band);
  const double band_power =
      ar1_band_power(spec.noise_level, spec.ar_coefficient, spec.sampling_rate, band.lo_hz, band.hi_hz);
  constexpr int kComponents = 4;
  const double lo = band.lo_hz + 1.0, hi = band.hi_hz - 1.0;
  const double amplitude = std::sqrt(2.0 * (spec.preictal_gain - 1.0) * band_power / kComponents);
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t c = 0; c < spec.n_channels; ++c) {
    std::seed_seq seq{spec.rng_seed, static_cast<std::uint64_t>(c), std::uint64_t{0x5e125e7}};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, spec.noise_level);
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    auto& x = rec.samples[c];

    double state = gauss(rng) * stationary_sd / spec.noise_level;
    for (std::size_t i = 0; i < n; ++i) {
      state = spec.ar_coefficient * state + gauss(rng);
      x[i] = state;
    }

    const bool informative = std::find(spec.informative_channels.begin(), spec.informative_channels.end(), c) !=
                             spec.informative_channels.end();
    for (double onset : spec.seizure_times) {
      // Draw phases for every window so all channels consume the same stream.
      double phases[kComponents];
      for (double& p : phases) p = phase(rng);
      if (informative && amplitude > 0.0) {
        const auto begin = static_cast<std::size_t>(std::llround((onset - spec.horizon_s - spec.preictal_s) * fs));
        const auto end = static_cast<std::size_t>(std::llround((onset - spec.horizon_s) * fs));
        for (std::size_t i = begin; i < std::min(end, n); ++i) {
          const double t = static_cast<double>(i) / fs;
          double v = 0.0;
          for (int k = 0; k < kComponents; ++k) {
            const double f = lo + (k + 0.5) * (hi - lo) / kComponents;
            v += std::sin(two_pi * f * t + phases[k]);
          }
          x[i] += amplitude * v;
        }
      }
      // Ictal discharge on every channel.
      const auto s0 = static_cast<std::size_t>(std::llround(onset * fs));
      const auto s1 = std::min(n, static_cast<std::size_t>(std::llround((onset + spec.seizure_duration_s) * fs)));
      for (std::size_t i = s0; i < s1; ++i) {
        const double t = static_cast<double>(i) / fs;
        x[i] += 4.0 * stationary_sd * std::sin(two_pi * 3.0 * t + phases[0]);
      }
    }
  }

  for (double onset : spec.seizure_times) out.annotations.events.push_back({onset, onset + spec.seizure_duration_s});
  validate_annotations(out.annotations);
  return out;
}

}  // namespace seizset

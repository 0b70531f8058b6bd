#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace seizset {

/// Multichannel EEG in microvolts, channels x samples.
struct EegRecord {
  int sampling_rate = 256;
  std::vector<std::string> channel_labels;
  std::vector<std::vector<double>> samples;
  /// Seconds since the Unix epoch, 0 for synthetic data.
  double start_time = 0.0;

  std::size_t channel_count() const noexcept { return samples.size(); }
  std::size_t sample_count() const noexcept { return samples.empty() ? 0 : samples.front().size(); }
  double duration_s() const noexcept {
    return sampling_rate > 0 ? static_cast<double>(sample_count()) / sampling_rate : 0.0;
  }

  /// Throws RecordError on unequal channel lengths, a non-positive rate or a
  /// label/channel count mismatch.
  void validate() const;
};

struct Seizure {
  double onset_s = 0.0;
  double end_s = 0.0;
  bool operator==(const Seizure&) const = default;
};

/// Seizure events in record time, sorted and non-overlapping.
struct SeizureAnnotations {
  std::string patient_id;
  std::vector<Seizure> events;
  /// Offset of the record start in patient time, if given in the sidecar.
  std::optional<double> record_start_s;
};

/// The 18 bipolar montage channels shared by all CHB-MIT patients, indexed
/// 0..17 in this order.
const std::vector<std::string>& canonical_channels();

struct IngestOptions {
  /// Labels to extract, in output order. Empty keeps every signal in file
  /// order.
  std::vector<std::string> channels = canonical_channels();
  /// Records shorter than one model input window are rejected.
  double min_duration_s = 38.0;
};

// ---------------------------------------------------------------------------
// EDF

struct EdfSignal {
  std::string label;
  std::string transducer;
  std::string physical_dimension = "uV";
  double physical_min = -3276.8;
  double physical_max = 3276.7;
  int digital_min = -32768;
  int digital_max = 32767;
  std::string prefiltering;
  int samples_per_record = 256;
  std::vector<std::int16_t> digital;

  double scale() const noexcept {
    return (physical_max - physical_min) / static_cast<double>(digital_max - digital_min);
  }
  double to_physical(std::int16_t d) const noexcept { return physical_min + (d - digital_min) * scale(); }
};

/// Raw contents of a plain (non-EDF+) EDF file.
struct EdfFile {
  std::string patient;
  std::string recording;
  std::string start_date = "01.01.00";  ///< dd.mm.yy
  std::string start_time = "00.00.00";  ///< hh.mm.ss
  double record_duration_s = 1.0;
  std::int64_t record_count = 0;
  std::vector<EdfSignal> signals;

  /// Start of recording in seconds since the Unix epoch (UTC, years 1985-2084).
  double start_epoch_s() const;
};

/// Parses the fixed header, per-signal headers and 16-bit little-endian
/// samples. Throws ParseError with the offending byte offset.
EdfFile read_edf_file(const std::filesystem::path& path);
void write_edf_file(const std::filesystem::path& path, const EdfFile& file);

/// Reads an EDF file, applies calibration and returns the requested channels
/// in requested order. Unrequested signals are dropped; missing ones raise a
/// ChannelError listing every absentee.
EegRecord read_edf(const std::filesystem::path& path, const IngestOptions& options = {});

/// Quantizes a record into 16-bit EDF signals with a symmetric physical range
/// covering the data.
EdfFile edf_from_record(const EegRecord& record, double record_duration_s = 1.0);

/// Reduces a label for matching: upper case, trimmed.
std::string normalize_label(std::string_view label);

// ---------------------------------------------------------------------------
// CSV

/// Header row of channel labels, then one comma-separated row per sample.
EegRecord read_csv_record(const std::filesystem::path& path, int sampling_rate, const IngestOptions& options = {});
/// Writes with round-trip precision.
void write_csv_record(const std::filesystem::path& path, const EegRecord& record);

// ---------------------------------------------------------------------------
// Annotation sidecar: lines "seizure <onset_s> <end_s>", optional
// "start <seconds>", '#' comments.

SeizureAnnotations load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const SeizureAnnotations& annotations);
/// Sorts by onset and rejects inverted or overlapping events.
void validate_annotations(SeizureAnnotations& annotations);

// ---------------------------------------------------------------------------
// Synthetic data

/// Frequency band as a half-open interval (lo, hi] in Hz.
struct Band {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

/// theta, alpha, beta, gamma1..gamma5.
const std::vector<Band>& default_bands();
/// Looks a band up by name among default_bands().
const Band& band_by_name(std::string_view name);

struct SynthSpec {
  std::size_t n_channels = 8;
  double duration_s = 3600.0;
  int sampling_rate = 256;
  std::vector<double> seizure_times;  ///< onsets in seconds
  double seizure_duration_s = 30.0;
  std::vector<std::size_t> informative_channels;
  std::string preictal_band = "alpha";
  double preictal_gain = 4.0;
  double noise_level = 10.0;        ///< innovation standard deviation, microvolts
  double ar_coefficient = 0.9;      ///< background AR(1) pole
  double preictal_s = 1800.0;       ///< length of the planted preictal window
  double horizon_s = 180.0;         ///< gap between preictal window end and onset
  std::uint64_t rng_seed = 1;
  std::vector<std::string> channel_labels;  ///< defaults to "CH0".."CHn-1"

  void validate() const;
};

struct SynthOutput {
  EegRecord record;
  SeizureAnnotations annotations;
};

/// Filtered Gaussian background per channel; sinusoids are added to the
/// informative channels inside each preictal window so that the expected
/// power in `preictal_band` rises by `preictal_gain`. Deterministic in the
/// seed.
SynthOutput synth_generate(const SynthSpec& spec);

/// Expected one-sided power of the AR(1) background within (lo, hi] Hz.
double ar1_band_power(double noise_sd, double pole, int sampling_rate, double lo_hz, double hi_hz);

}  // namespace seizset

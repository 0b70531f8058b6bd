#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seizset/features.hpp"
#include "seizset/ingest.hpp"
#include "seizset/tensor.hpp"

namespace seizset {

struct LabelConfig {
  double sph_s = 180.0;
  double sop_s = 1800.0;
  double exclusion_s = 3600.0;
  double merge_gap_s = 3600.0;
  /// Seizures with less preictal data than this fraction of the SOP are
  /// omitted from training and evaluation.
  double min_preictal_fraction = 0.5;
};

struct SequenceConfig {
  std::size_t seq_len = 19;  ///< feature stamps per sample
  std::size_t stride = 2;    ///< seconds between consecutive stamps

  /// Stamps spanned by one sample, first to last inclusive (37 by default).
  std::size_t span() const noexcept { return (seq_len - 1) * stride + 1; }
  /// Seconds of signal behind one sample (38 by default).
  std::size_t duration_s() const noexcept { return span() + 1; }
};

struct MergedSeizure {
  double onset_s = 0.0;
  double end_s = 0.0;
  int constituents = 1;
  bool operator==(const MergedSeizure&) const = default;
};

/// Greedy left-to-right merge while next.onset - prev.end < gap_s.
std::vector<MergedSeizure> merge_seizures(const std::vector<Seizure>& events, double gap_s = 3600.0);
/// Re-merging already merged events; the result keeps summed constituent counts.
std::vector<MergedSeizure> merge_seizures(const std::vector<MergedSeizure>& events, double gap_s = 3600.0);

/// Per-second labels: entry s describes [start_s + s, start_s + s + 1).
struct PeriodLabeling {
  double start_s = 0.0;
  std::vector<Period> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// Label of the second starting at integer time t; seconds outside the
  /// track are excluded.
  Period at(long long t) const noexcept;
  std::size_t count(Period p) const noexcept;
};

/// Precedence ictal > preictal > excluded > interictal. Preictal is
/// [onset - sph - sop, onset - sph), exclusion [onset - exclusion, onset) and
/// [end, end + exclusion). A second is classified by its start point.
PeriodLabeling label_timeline(double duration_s, const std::vector<MergedSeizure>& merged,
                              const LabelConfig& config = {});

/// A feature stamp covers seconds k and k + 1; it takes their label when
/// both agree and is excluded otherwise. `offset_s` places the timeline on
/// the labeling's time axis.
void label_stamps(FeatureTimeline& timeline, const PeriodLabeling& labeling, long long offset_s = 0);

struct SequenceSample {
  std::size_t record = 0;     ///< index into the patient's records
  std::size_t anchor = 0;     ///< first stamp index within the record timeline
  double anchor_time_s = 0.0; ///< first stamp in patient time
  int label = 0;              ///< 1 preictal, 0 interictal
  /// Preictal: the seizure it precedes. Interictal: the next seizure, or -1
  /// when no seizure follows.
  int seizure = -1;
};

/// Anchors at 1-s stride; a sample at anchor a uses stamps a, a + stride, ...
/// and is emitted only when all of them are preictal or all interictal.
/// `onsets` (patient time, ascending) drive the seizure field.
std::vector<SequenceSample> build_sequences(const FeatureTimeline& timeline, const SequenceConfig& config = {},
                                            std::size_t record = 0, double offset_s = 0.0,
                                            const std::vector<double>& onsets = {});

enum class DivisionKind { even, seizure_independent };
const char* to_string(DivisionKind k);
DivisionKind division_from_string(std::string_view s);

struct Fold {
  int index = 0;
  int held_out_seizure = 0;
  DivisionKind kind = DivisionKind::even;
  /// Seizure-independent fold whose seizure has no interictal span of its own.
  bool preictal_only = false;
  std::vector<std::size_t> train;  ///< sample indices, ascending
  std::vector<std::size_t> test;   ///< sample indices, ascending
};

/// Leave-one-seizure-out with the concatenated interictal sample stream split
/// into n equal contiguous chunks.
std::vector<Fold> split_even(const std::vector<SequenceSample>& samples, std::size_t n_seizures);

/// Leave-one-seizure-out where each fold's interictal test data is the span
/// preceding its seizure; data after the last seizure joins the last fold.
/// Needs at least 3 seizures with a non-empty interictal span.
std::vector<Fold> split_seizure_independent(const std::vector<SequenceSample>& samples, std::size_t n_seizures);

std::vector<Fold> divide(const std::vector<SequenceSample>& samples, std::size_t n_seizures, DivisionKind kind);

enum class BalancePolicy { undersample, weighted };
const char* to_string(BalancePolicy p);
BalancePolicy balance_from_string(std::string_view s);

struct BalancedSet {
  std::vector<std::size_t> indices;  ///< ascending
  double weight_interictal = 1.0;
  double weight_preictal = 1.0;
  std::size_t count_interictal = 0;
  std::size_t count_preictal = 0;
};

/// Undersample: seeded random subset of the majority class down to 1:1.
/// Weighted: keeps every sample; class weights are inverse frequencies
/// normalized so that the two weights average 1.
BalancedSet balance(const std::vector<SequenceSample>& samples, std::span<const std::size_t> indices,
                    BalancePolicy policy, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Patient assembly

struct RecordTimeline {
  std::string id;
  double offset_s = 0.0;  ///< record start in patient time, whole seconds
  FeatureTimeline timeline;
};

struct PatientDataset {
  std::string patient_id;
  std::vector<RecordTimeline> records;
  std::vector<MergedSeizure> merged;   ///< every merged seizure
  std::vector<MergedSeizure> seizures; ///< evaluable subset, fold order
  PeriodLabeling labeling;             ///< patient time, omitted preictal spans excluded
  std::vector<SequenceSample> samples;
  SequenceConfig sequence;

  std::size_t channel_count() const;
  std::size_t feature_count() const;
};

/// Merges events (patient time), labels the patient time axis, drops
/// seizures with too little preictal data, labels stamps and builds samples.
PatientDataset assemble_patient(std::string patient_id, std::vector<RecordTimeline> records,
                                const std::vector<Seizure>& events, const LabelConfig& labels = {},
                                const SequenceConfig& sequence = {});

/// Features for samples as a (B*C*T) x F tensor; rows ordered sample,
/// channel, time. `channels` empty keeps all.
Tensor gather_batch(const PatientDataset& data, std::span<const std::size_t> sample_indices,
                    std::span<const std::size_t> channels = {});
std::vector<double> gather_labels(const PatientDataset& data, std::span<const std::size_t> sample_indices);

/// One line per sample and fold: record_id,anchor_s,label,fold,role.
void write_fold_manifest(const std::filesystem::path& path, const PatientDataset& data,
                         const std::vector<Fold>& folds);

}  // namespace seizset

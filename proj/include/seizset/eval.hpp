#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seizset/dataset.hpp"
#include "seizset/features.hpp"
#include "seizset/model.hpp"
#include "seizset/train.hpp"

namespace seizset {

/// Per-second model output. Timestamps strictly increase; a step larger
/// than 1 s marks a gap in the data.
struct ProbabilityTrace {
  std::vector<double> t_s;
  std::vector<double> probability;
  std::vector<std::uint8_t> positive;
  std::vector<Period> label;
  /// Seizure onsets the trace is scored against; kept as a comment line in
  /// the CSV.
  std::vector<double> onsets_s;

  std::size_t size() const noexcept { return t_s.size(); }
  void push(double t, double p, bool pos, Period l);
  /// Throws ValidationError when tracks differ in length or time does not
  /// strictly increase by whole seconds.
  void validate() const;
};

/// Time of the prediction for a window whose first stamp is `anchor`: the
/// last second the window covers.
inline double trace_time(double anchor_time_s, const SequenceConfig& seq) {
  return anchor_time_s + static_cast<double>(seq.span());
}

/// Label of a window: the common period of its stamps, ictal when any stamp
/// is ictal, otherwise excluded.
Period window_label(const FeatureTimeline& timeline, std::size_t anchor, const SequenceConfig& seq);

/// Predicts at every second t >= span() of the timeline (record time plus
/// `offset_s`) on the window ending at t. Throws DimensionError when
/// `channels` does not match the model's channel count.
ProbabilityTrace infer_stream(const TrainedModel& model, const FeatureTimeline& timeline, double threshold = 0.5,
                              const SequenceConfig& seq = {}, double offset_s = 0.0);

/// Trace over a fold's test samples. Attention rows of every prediction are
/// added to `attention` when given.
ProbabilityTrace fold_trace(const TrainedModel& model, const PatientDataset& data, const Fold& fold,
                            double threshold = 0.5, AttentionAccumulator* attention = nullptr);

/// Attention rows of the given samples, split by their label.
void accumulate_class_attention(const TrainedModel& model, const PatientDataset& data,
                                std::span<const std::size_t> samples, AttentionAccumulator& interictal,
                                AttentionAccumulator& preictal);

struct Alarm {
  double trigger_time_s = 0.0;
  double run_start_s = 0.0;
  bool operator==(const Alarm&) const = default;
};

/// An alarm fires at a second where the uninterrupted positive run (broken
/// by a negative or a gap) has lasted persistence_s seconds or more, and
/// no alarm fired within the preceding refractory_s seconds.
std::vector<Alarm> alarms_from_trace(const ProbabilityTrace& trace, double persistence_s = 240.0,
                                     double refractory_s = 1800.0);

struct EvalCounts {
  std::size_t tp = 0, fn = 0, fp = 0;
  double interictal_hours = 0.0;
  EvalCounts& operator+=(const EvalCounts& o);
  bool operator==(const EvalCounts&) const = default;
};

struct ScoringConfig {
  double sph_s = 180.0;
  double sop_s = 1800.0;
};

/// Alarm a is correct when some onset o has a + sph < o <= a + sph + sop.
/// Every onset with a correct alarm is a TP, others FN. An alarm with no
/// onset is FP when its label is interictal and discarded otherwise.
/// `alarm_labels` holds one label per alarm.
EvalCounts score_events(const std::vector<Alarm>& alarms, std::span<const Period> alarm_labels,
                        std::span<const double> onsets, double interictal_seconds, const ScoringConfig& cfg = {});

/// Labels and interictal time taken from a per-second labeling.
EvalCounts score_events(const std::vector<Alarm>& alarms, std::span<const double> onsets,
                        const PeriodLabeling& labeling, const ScoringConfig& cfg = {});

/// Labels from the trace at each alarm time; interictal time is the number
/// of interictal trace seconds.
EvalCounts score_trace(const ProbabilityTrace& trace, const std::vector<Alarm>& alarms,
                       std::span<const double> onsets, const ScoringConfig& cfg = {});

/// Percent, nullopt when there are no seizures.
std::optional<double> sensitivity(const EvalCounts& c);
/// Per hour, nullopt when there is no interictal time.
std::optional<double> fpr(const EvalCounts& c);

/// Mean sensitivity of the trace's positive track circularly shifted by
/// `shifts` seeded random offsets: a chance level with the same number and
/// length of positive runs.
double shifted_baseline_sensitivity(const ProbabilityTrace& trace, std::span<const double> onsets,
                                    double persistence_s, double refractory_s, const ScoringConfig& cfg,
                                    std::size_t shifts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

struct PatientResult {
  std::string patient;
  std::string status = "ok";  ///< "ok" or the reason the patient was skipped
  std::size_t seizures = 0;
  EvalCounts all_channels;
  /// Post-selection counts; absent when selection failed and the
  /// all-channel model is kept.
  std::optional<EvalCounts> selected;
  std::string selected_channels;  ///< "12,14" or "-"
  std::string selection_status;   ///< "selected", "failed" or "-"
};

enum class AggregateMode { mean, all };

struct SummaryRow {
  std::string label;
  std::optional<double> sensitivity;
  std::optional<double> fpr;
  EvalCounts counts;
};

/// Mean: unweighted average over patients with a defined metric. All:
/// metrics recomputed from pooled counts. `selected` picks post-selection
/// counts, falling back to all-channel counts when selection failed.
SummaryRow aggregate(const std::vector<PatientResult>& patients, AggregateMode mode, bool selected = false);

/// Trace CSV: t_s,probability,positive,label, preceded by an optional
/// "# onsets_s=a,b" line.
void write_trace_csv(const std::filesystem::path& path, const ProbabilityTrace& trace);
ProbabilityTrace read_trace_csv(const std::filesystem::path& path);

/// One row per patient plus Mean and All rows. `config_lines` are written
/// first as "# key=value" comments.
void write_report_csv(const std::filesystem::path& path, const std::vector<PatientResult>& patients,
                      const std::vector<std::string>& config_lines);

struct PlotSpan {
  double begin_s = 0.0, end_s = 0.0;
};
/// Probability against time with preictal spans shaded and alarms marked.
void write_trace_svg(const std::filesystem::path& path, const ProbabilityTrace& trace,
                     const std::vector<Alarm>& alarms, const std::string& title, double threshold = 0.5);
/// Maximal runs of preictal labels in the trace.
std::vector<PlotSpan> preictal_spans(const ProbabilityTrace& trace);

// ---------------------------------------------------------------------------
// Streaming

/// Consumes one second of raw EEG at a time and predicts once enough
/// feature stamps are buffered. Each call computes the features of the 2-s
/// window ending at the new second, so latency per call is one window of
/// preprocessing plus one forward pass.
class StreamPredictor {
 public:
  StreamPredictor(TrainedModel model, int sampling_rate, const FeatureConfig& features = {},
                  const SequenceConfig& seq = {});

  /// `second` holds one second per channel in the model's channel order.
  /// Returns the prediction once span() stamps are available.
  std::optional<Prediction> push(const std::vector<std::vector<double>>& second);
  std::size_t stamps() const noexcept { return stamps_; }

 private:
  TrainedModel model_;
  int fs_;
  FeatureConfig features_;
  SequenceConfig seq_;
  Periodogram periodogram_;
  std::vector<double> freqs_, power_, window_;
  std::vector<std::vector<double>> previous_;  ///< last second per channel
  std::deque<std::vector<double>> history_;    ///< feature stamps, C x F each
  std::size_t stamps_ = 0;
};

}  // namespace seizset

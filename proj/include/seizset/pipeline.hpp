#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "seizset/config.hpp"
#include "seizset/eval.hpp"

namespace seizset {

// ---------------------------------------------------------------------------
// Cohort on disk: <data.dir>/<patient>/<record>.{edf,csv} with an optional
// <record>.seizures sidecar beside each record.

struct LoadedRecord {
  std::string id;
  EegRecord record;
  SeizureAnnotations annotations;
  double offset_s = 0.0;  ///< record start in patient time
};

std::vector<std::string> list_patients(const ExperimentConfig& cfg);
std::vector<std::filesystem::path> list_records(const std::filesystem::path& patient_dir);
IngestOptions ingest_options(const ExperimentConfig& cfg);
EegRecord read_record(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// Reads every record of a patient and places it on the patient time axis:
/// sidecar "start" when given, else the EDF start time relative to the
/// earliest record, else back to back.
std::vector<LoadedRecord> load_patient(const ExperimentConfig& cfg, const std::string& patient);

/// ingest -> features -> merge/label -> samples.
PatientDataset prepare_patient(const ExperimentConfig& cfg, const std::string& patient);

/// Model config with sequence length and feature count filled in.
ModelConfig resolved_model(const ExperimentConfig& cfg);

/// Seed of one fold's all-channel model.
std::uint64_t fold_seed(std::uint64_t seed, const std::string& patient, int fold);

/// Onsets a fold is scored against: its held-out seizure.
std::vector<double> fold_onsets(const PatientDataset& data, const Fold& fold);

struct FoldOutcome {
  int fold = 0;
  TrainedModel model;
  ProbabilityTrace trace;
  std::vector<Alarm> alarms;
  EvalCounts counts;
};

/// Trains on the fold (seed `seed`, channels empty = all), predicts its
/// test samples, raises alarms and scores them.
FoldOutcome run_fold(const ExperimentConfig& cfg, const PatientDataset& data, const Fold& fold,
                     std::span<const std::size_t> channels, std::uint64_t seed,
                     AttentionAccumulator* attention = nullptr);

/// Scores an already trained fold model.
FoldOutcome evaluate_fold(const ExperimentConfig& cfg, const PatientDataset& data, const Fold& fold,
                          TrainedModel model, AttentionAccumulator* attention = nullptr);

struct SelectionOutcome {
  std::vector<double> test_mean_attention;  ///< over every test prediction
  std::vector<double> mean_attention;       ///< drives selection, per selection.scope
  std::vector<double> attention;            ///< finalized
  ChannelSelection selection;
};

/// Accumulates the attention of each fold's all-channel model (models
/// parallel to folds) and selects channels.
SelectionOutcome choose_channels(const ExperimentConfig& cfg, const PatientDataset& data,
                                 const std::vector<Fold>& folds, const std::vector<const TrainedModel*>& models);

/// channel,label,test_mean,mean,attention,selected
void write_attention_csv(const std::filesystem::path& path, const PatientDataset& data, const SelectionOutcome& o);
/// <tag>_fold<k>.trace.csv, .svg and .ckpt in `dir`.
void write_fold_artifacts(const std::filesystem::path& dir, const std::string& tag, const ExperimentConfig& cfg,
                          const PatientDataset& data, const FoldOutcome& f);

struct PatientOutcome {
  PatientResult result;
  std::vector<Fold> folds;
  std::vector<double> mean_attention;  ///< drives selection, per selection.scope
  std::vector<double> attention;       ///< finalized
  std::vector<double> test_mean_attention;  ///< over every test prediction
  ChannelSelection selection;
  std::vector<FoldOutcome> all_channels;
  std::vector<FoldOutcome> selected;
};

using LogFn = std::function<void(const std::string&)>;

/// Divide, train every fold on all channels, accumulate attention, select
/// channels, retrain on them and re-evaluate.
PatientOutcome run_patient(const ExperimentConfig& cfg, const PatientDataset& data, const LogFn& log = {});

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<PatientResult> patients;
  std::vector<PatientOutcome> outcomes;  ///< parallel to patients; empty outcome for skipped ones
};

/// Lines that head every report: the resolved config and derived constants.
std::vector<std::string> report_config_lines(const ExperimentConfig& cfg);

/// Runs every patient into a fresh run directory (timestamped unless
/// disabled). A failing patient is reported with its reason; the others
/// continue.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const LogFn& log = {});

/// Reads the "# key=value" lines at the top of a report back into a config.
ExperimentConfig config_from_report(const std::filesystem::path& report);

// ---------------------------------------------------------------------------
// Synthetic cohort

struct CohortSpec {
  std::size_t patients = 3;
  std::size_t channels = 8;
  std::vector<std::size_t> informative{2, 5};
  std::size_t seizures = 4;
  double preictal_gain = 4.0;
  std::string band = "alpha";
  /// Multiplies every clinical time constant (SOP, SPH, exclusion, merge
  /// gap, refractory, persistence).
  double time_scale = 0.1;
  /// Seconds between consecutive onsets before scaling jitter.
  double spacing_s = 2400.0;
  double seizure_duration_s = 20.0;
  int sampling_rate = 256;
  std::uint64_t seed = 1;
};

/// Config whose constants are the defaults scaled by spec.time_scale.
ExperimentConfig cohort_config(const CohortSpec& spec, const std::filesystem::path& data_dir);

/// Writes <dir>/<patient>/<patient>_01.edf with sidecars plus
/// <dir>/experiment.cfg. Returns the config.
ExperimentConfig write_synthetic_cohort(const std::filesystem::path& dir, const CohortSpec& spec);

/// In-memory equivalent of one pseudo-patient: record and annotations.
SynthOutput synth_patient(const CohortSpec& spec, std::size_t patient);

}  // namespace seizset

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seizset/dataset.hpp"
#include "seizset/features.hpp"
#include "seizset/model.hpp"
#include "seizset/train.hpp"

namespace seizset {

/// Samples whose attention drives channel selection. test: every test
/// prediction of every fold. train_balanced: each fold model over its own
/// training samples, class means averaged.
enum class SelectionScope { test, train_balanced };
const char* to_string(SelectionScope s);
SelectionScope selection_scope_from_string(std::string_view s);

struct ExperimentConfig {
  // data
  std::filesystem::path data_dir = "data";
  std::vector<std::string> patients;        ///< empty: every subdirectory
  std::vector<std::string> channels = canonical_channels();  ///< empty: file order
  int csv_sampling_rate = 256;

  LabelConfig labels;
  SequenceConfig sequence;
  FeatureConfig features;
  DivisionKind division = DivisionKind::seizure_independent;
  ModelConfig model;
  TrainConfig train;

  SelectionPolicy selection;
  /// Softmax temperature applied to mean attention before selection; unset
  /// means 1 / C.
  std::optional<double> selection_temperature;
  SelectionScope selection_scope = SelectionScope::train_balanced;
  bool retrain = true;

  double threshold = 0.5;
  double persistence_s = 240.0;
  double refractory_s = 1800.0;
  /// Per-patient persistence overrides.
  std::map<std::string, double> persistence_overrides;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  bool timestamped = true;
  unsigned threads = 1;
  /// Per-fold traces, plots, checkpoints and manifests.
  bool write_artifacts = true;

  double persistence_for(const std::string& patient) const;
  double temperature_for(std::size_t channels) const;

  /// Sets one key ("section.name"). Throws ConfigError on unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Every key with its resolved value, in a fixed order, as "key=value".
  std::vector<std::string> lines() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Reads "key=value" lines; "[section]" headers prefix later keys with
/// "section."; '#' starts a comment.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies lines in the same format to `cfg`.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source = "<text>");
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// "theta:4:8,alpha:8:13" and back.
std::vector<Band> parse_bands(const std::string& text);
std::string format_bands(const std::vector<Band>& bands);

}  // namespace seizset

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seizset/dataset.hpp"
#include "seizset/model.hpp"

namespace seizset {

enum class OptimizerKind { adam, sgd };
const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t early_stop_patience = 10;
  /// Validation loss must drop by more than this to count as an improvement.
  double early_stop_min_delta = 1e-4;
  BalancePolicy balance_policy = BalancePolicy::undersample;
  std::uint64_t rng_seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Overrides the weights derived by the balance policy (interictal, preictal).
  std::optional<std::pair<double, double>> class_weights;
  double validation_fraction = 0.1;
  /// Fit the model's input standardization on the training split.
  bool fit_input_scaler = true;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t batches = 0;
};

struct TrainedModel {
  ModelParams params;
  std::vector<EpochStats> history;
  TrainConfig config;
  std::vector<std::size_t> channels;
  std::size_t best_epoch = 0;  ///< 0 when the initial parameters were never beaten
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
};

/// -w (y log p + (1-y) log(1-p)) evaluated through the logit.
double bce_from_logit(double logit, double label, double weight = 1.0);
double bce_loss(double prob, double label, double weight = 1.0);

/// First and second moment state for every trainable tensor.
class Optimizer {
 public:
  Optimizer(const ModelParams& params, const TrainConfig& cfg);
  /// One update from gradients listed in ModelParams::trainable() order.
  void step(ModelParams& params, std::span<const Tensor* const> grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Inputs already standardized, laid out (B*C*T) x F.
struct Batch {
  Tensor x;
  std::vector<double> labels;
  std::vector<double> weights;
  std::size_t samples = 0;
  std::size_t channels = 0;
};

/// One pass over `batches` in the given order. Throws TrainingError naming
/// the batch index when a loss is non-finite.
EpochStats train_epoch(ModelParams& params, Optimizer& opt, std::span<const Batch> batches);

/// Splits `indices` into ascending (train, validation) parts, stratified by
/// label, holding out round(fraction * n_class) per class (at least one when
/// the class has two or more samples).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    const std::vector<SequenceSample>& samples, std::span<const std::size_t> indices, double fraction,
    std::uint64_t seed);

/// Per-feature mean and 1/std over every row of the given samples.
void fit_input_scaler(ModelParams& params, const PatientDataset& data, std::span<const std::size_t> indices,
                      std::span<const std::size_t> channels);

struct Evaluation {
  double loss = 0.0;      ///< class-balanced mean BCE
  double accuracy = 0.0;  ///< class-balanced accuracy at 0.5
};
Evaluation evaluate(const ModelParams& params, const PatientDataset& data, std::span<const std::size_t> indices,
                    std::span<const std::size_t> channels);

/// Trains a fresh model on the fold's training samples restricted to
/// `channels` (empty = all). Returns the best-validation snapshot.
TrainedModel fit(const PatientDataset& data, const Fold& fold, const TrainConfig& cfg,
                 std::span<const std::size_t> channels = {}, const ModelConfig& model = {});

/// Seed used for the post-selection model.
std::uint64_t retrain_seed(std::uint64_t seed) noexcept;

/// Fresh model on the selected channels. Throws SelectionError when the
/// selection failed.
TrainedModel retrain_selected(const PatientDataset& data, const Fold& fold, const ChannelSelection& selection,
                              const TrainConfig& cfg, const ModelConfig& model = {});

/// Prediction on a sample laid out (C*T) x F over the model's own channels.
/// Throws DimensionError when the sample holds a different channel count.
Prediction predict(const TrainedModel& model, const Tensor& sample);

/// Appends one line per epoch: tag epoch train_loss val_loss val_accuracy.
void append_training_log(const std::filesystem::path& path, const std::string& tag, const TrainedModel& model);

}  // namespace seizset

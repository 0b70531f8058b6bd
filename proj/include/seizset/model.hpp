#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seizset/graph.hpp"
#include "seizset/tensor.hpp"

namespace seizset {

struct ModelConfig {
  std::size_t seq_len = 19;
  std::size_t n_features = 44;
  std::size_t dim_temporal = 64;
  std::size_t dim_output = 64;
  std::size_t d_k = 64;
  std::size_t d_v = 64;
  std::size_t heads = 4;

  /// Throws ConfigError when a width is zero or not divisible by heads.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Weights of one multihead attention block. Query width d_x doubles as the
/// output width so the residual connection is well formed.
struct MabParams {
  Tensor w_q;  ///< d_x x d_k
  Tensor w_k;  ///< d_y x d_k
  Tensor w_v;  ///< d_y x d_v
  Tensor w_o;  ///< d_v x d_x
  Tensor w_h;  ///< d_x x d_x
  Tensor b_h;  ///< 1 x d_x
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  ///< 1 x d_x
  std::size_t heads = 1;

  std::size_t query_width() const { return w_q.shape()[0]; }
  std::size_t key_width() const { return w_k.shape()[0]; }
};

/// Xavier-uniform projections, unit gains, zero biases.
MabParams init_mab(std::size_t d_x, std::size_t d_y, std::size_t d_k, std::size_t d_v, std::size_t heads,
                   std::uint64_t seed);

struct ModelParams {
  ModelConfig config;
  Tensor kernel_temp;     ///< 1 x dim_temporal
  MabParams temporal;     ///< query dim_temporal, keys n_features
  Tensor kernel_channel;  ///< 1 x dim_output
  MabParams channel;      ///< query dim_output, keys dim_temporal
  Tensor head_w;          ///< dim_output x 1
  Tensor head_b;          ///< 1 x 1
  /// Fixed input standardization x' = (x - input_mean) * input_scale, not
  /// trained by gradient; identity until fitted on training data.
  Tensor input_mean;   ///< 1 x n_features
  Tensor input_scale;  ///< 1 x n_features

  /// Trainable tensors in a fixed order shared by the optimizer and
  /// checkpoints.
  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;
  static std::vector<std::string> trainable_names();
  std::size_t parameter_count() const;
};

/// Kernels ~ N(0, 1/sqrt(dim)); projections Xavier uniform. The result does
/// not depend on the channel count.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Graph-level forward

struct MabVars {
  Var w_q, w_k, w_v, w_o, w_h, b_h, ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  std::size_t heads = 1;
};

struct ModelVars {
  Var kernel_temp;
  MabVars temporal;
  Var kernel_channel;
  MabVars channel;
  Var head_w, head_b;
  /// Same order as ModelParams::trainable().
  std::vector<Var> all;
};

/// Registers parameters as graph leaves.
ModelVars bind(Graph& g, const ModelParams& params, bool trainable = true);

struct MabOutput {
  Var out;         ///< rows of x, width d_x
  Tensor weights;  ///< head-averaged attention, rows of x by key_set
};

/// H = LN(X + MultiHead(X W_Q, Y W_K, Y W_V) W_O); out = LN(H + ReLU(H W_H + b_H)).
/// X rows come in sets of `query_set`, Y rows in sets of `key_set`.
MabOutput mab(Var x, Var y, const MabVars& p, std::size_t query_set, std::size_t key_set);

struct ForwardOutput {
  Var logits;                  ///< B x 1
  Tensor channel_attention;    ///< B x C
  Tensor temporal_attention;   ///< (B*C) x T
};

/// Full network on a batch of standardized inputs laid out (B*C*T) x F with
/// rows ordered sample, channel, time.
ForwardOutput forward(const ModelVars& p, const ModelConfig& config, Var x, std::size_t batch, std::size_t channels);

/// Applies the model's input standardization.
Tensor standardize(const ModelParams& params, const Tensor& x);

// ---------------------------------------------------------------------------
// Value-level API

struct MabResult {
  Tensor out;
  Tensor attention;
};
MabResult mab_forward(const Tensor& x, const Tensor& y, const MabParams& p);

/// Temporal kernel pooling of one channel's T x F sequence.
Tensor temporal_stage(const Tensor& sequence, const ModelParams& params);

struct ChannelStageResult {
  Tensor output;     ///< 1 x dim_output
  Tensor attention;  ///< 1 x C
};
ChannelStageResult channel_stage(const Tensor& channel_features, const ModelParams& params);

struct Prediction {
  double probability = 0.0;
  std::vector<double> attention;  ///< 1 x C
};

/// One sample laid out (C*T) x F, rows ordered channel, time.
Prediction predict(const Tensor& sample, std::size_t channels, const ModelParams& params);

struct BatchPrediction {
  std::vector<double> probability;
  std::vector<double> logit;
  Tensor attention;  ///< B x C
};

/// Batched inference; results per sample are bitwise independent of the
/// batch composition.
BatchPrediction predict_batch(const Tensor& batch, std::size_t n_samples, std::size_t channels,
                              const ModelParams& params);

double stable_sigmoid(double z) noexcept;

// ---------------------------------------------------------------------------
// Attention accumulation and channel selection

class AttentionAccumulator {
 public:
  explicit AttentionAccumulator(std::size_t channels = 0) : sum_(channels, 0.0) {}

  /// Adds one attention row; it must sum to 1 within 1e-6.
  void accumulate(std::span<const double> row);
  /// Adds every row of a B x C tensor.
  void accumulate_rows(const Tensor& rows);
  /// Combines a shard accumulated elsewhere.
  void merge(const AttentionAccumulator& other);

  /// softmax(mean / temperature). Throws StateError when empty.
  std::vector<double> finalize(double temperature = 1.0) const;
  std::vector<double> mean() const;

  std::size_t channels() const noexcept { return sum_.size(); }
  std::size_t count() const noexcept { return count_; }
  const std::vector<double>& sum() const noexcept { return sum_; }

 private:
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

/// softmax(mean / temperature).
std::vector<double> attention_softmax(std::vector<double> mean, double temperature = 1.0);
/// Average of the two class means; the non-empty one alone when the other is
/// empty.
std::vector<double> class_balanced_mean(const AttentionAccumulator& interictal, const AttentionAccumulator& preictal);

struct SelectionPolicy {
  double dominance_factor = 1.5;
  double fail_factor = 1.2;
  std::size_t max_channels = 5;
};

struct ChannelSelection {
  enum class Status { selected, failed };
  Status status = Status::failed;
  std::vector<std::size_t> channels;  ///< ascending
  std::vector<double> attention;
  bool ok() const noexcept { return status == Status::selected; }
};

/// Channels with attention >= dominance_factor / C, strongest first, capped
/// at max_channels. Fails when none qualify or when the maximum is below
/// fail_factor / C.
ChannelSelection select_channels(std::span<const double> attention, const SelectionPolicy& policy = {});

std::string format_channels(const std::vector<std::size_t>& channels);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ModelParams params;
  /// Channel indices of the source recording the model consumes.
  std::vector<std::size_t> channels;
  std::vector<std::string> channel_labels;
  std::map<std::string, std::string> metadata;
};

/// Text container: header, config echo, channels, metadata, then every array
/// with its name and shape at round-trip precision.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also rejects a file whose model config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace seizset

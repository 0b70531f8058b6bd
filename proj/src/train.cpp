#include "seizset/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "seizset/errors.hpp"
#include "seizset/graph.hpp"

namespace seizset {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (!(early_stop_min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (class_weights && !(class_weights->first > 0.0 && class_weights->second > 0.0))
    throw ConfigError("class weights must be positive");
}

double bce_from_logit(double logit, double label, double weight) {
  // softplus(z) - y z, with softplus split by sign to avoid overflow.
  const double sp = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return weight * (sp - label * logit);
}

double bce_loss(double prob, double label, double weight) {
  if (!(prob > 0.0 && prob < 1.0)) throw NumericError("probability must lie in (0, 1)");
  return bce_from_logit(std::log(prob) - std::log1p(-prob), label, weight);
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(const ModelParams& params, const TrainConfig& cfg)
    : kind_(cfg.optimizer), lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_epsilon) {
  for (const Tensor* t : params.trainable()) {
    m_.emplace_back(t->shape());
    v_.emplace_back(t->shape());
  }
}

void Optimizer::step(ModelParams& params, std::span<const Tensor* const> grads) {
  auto tensors = params.trainable();
  if (grads.size() != tensors.size()) throw DimensionError("optimizer got a gradient list of the wrong length");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto p = tensors[i]->values();
    const auto g = grads[i]->values();
    if (g.size() != p.size()) throw DimensionError("gradient shape does not match parameter " + std::to_string(i));
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * g[k];
      continue;
    }
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Epoch loop

namespace {

double train_step(ModelParams& params, Optimizer& opt, const Batch& batch, std::size_t index) {
  Graph g;
  ModelVars v = bind(g, params, true);
  Var loss;
  try {
    ForwardOutput out = forward(v, params.config, g.constant(batch.x), batch.samples, batch.channels);
    loss = bce_with_logits(out.logits, batch.labels, batch.weights);
  } catch (const NumericError& e) {
    throw TrainingError("non-finite loss at batch " + std::to_string(index) + ": " + e.what());
  }
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw TrainingError("non-finite loss at batch " + std::to_string(index));
  g.backward(loss);
  std::vector<const Tensor*> grads;
  grads.reserve(v.all.size());
  for (const Var& p : v.all) grads.push_back(&g.grad(p));
  opt.step(params, grads);
  return value;
}

Batch make_batch(const ModelParams& params, const PatientDataset& data, std::span<const std::size_t> idx,
                 std::span<const std::size_t> channels, double w_neg, double w_pos) {
  Batch b;
  b.x = standardize(params, gather_batch(data, idx, channels));
  b.labels = gather_labels(data, idx);
  for (double y : b.labels) b.weights.push_back(y > 0.5 ? w_pos : w_neg);
  b.samples = idx.size();
  b.channels = channels.size();
  return b;
}

std::vector<std::size_t> all_channels(const PatientDataset& data, std::span<const std::size_t> channels) {
  if (!channels.empty()) return {channels.begin(), channels.end()};
  std::vector<std::size_t> out(data.channel_count());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = c;
  return out;
}

}  // namespace

EpochStats train_epoch(ModelParams& params, Optimizer& opt, std::span<const Batch> batches) {
  if (batches.empty()) throw TrainingError("train_epoch needs at least one batch");
  EpochStats s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    s.train_loss += train_step(params, opt, batches[i], i) * static_cast<double>(batches[i].samples);
    n += batches[i].samples;
  }
  s.train_loss /= static_cast<double>(n);
  s.batches = batches.size();
  return s;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    const std::vector<SequenceSample>& samples, std::span<const std::size_t> indices, double fraction,
    std::uint64_t seed) {
  std::vector<std::size_t> cls[2];
  for (auto i : indices) cls[samples.at(i).label == 1 ? 1 : 0].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& c : cls) {
    std::size_t hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(c.size())));
    if (fraction > 0.0 && hold == 0 && c.size() >= 2) hold = 1;
    if (hold >= c.size()) hold = c.size() > 0 ? c.size() - 1 : 0;
    std::shuffle(c.begin(), c.end(), rng);
    val.insert(val.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(hold));
    train.insert(train.end(), c.begin() + static_cast<std::ptrdiff_t>(hold), c.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

void fit_input_scaler(ModelParams& params, const PatientDataset& data, std::span<const std::size_t> indices,
                      std::span<const std::size_t> channels) {
  const std::size_t f = params.config.n_features;
  if (data.feature_count() != f) throw DimensionError("dataset feature count does not match the model");
  const auto chans = all_channels(data, channels);
  std::vector<double> sum(f, 0.0), sq(f, 0.0);
  double n = 0.0;
  for (auto i : indices) {
    const SequenceSample& s = data.samples.at(i);
    const FeatureTimeline& tl = data.records.at(s.record).timeline;
    for (auto c : chans)
      for (std::size_t t = 0; t < data.sequence.seq_len; ++t) {
        const auto row = tl.at(s.anchor + t * data.sequence.stride, c);
        for (std::size_t k = 0; k < f; ++k) {
          sum[k] += row[k];
          sq[k] += row[k] * row[k];
        }
        n += 1.0;
      }
  }
  if (n == 0.0) return;
  for (std::size_t k = 0; k < f; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, sq[k] / n - mean * mean);
    const double sd = std::sqrt(var);
    params.input_mean[k] = mean;
    params.input_scale[k] = sd > 1e-8 ? 1.0 / sd : 1.0;
  }
}

Evaluation evaluate(const ModelParams& params, const PatientDataset& data, std::span<const std::size_t> indices,
                    std::span<const std::size_t> channels) {
  const auto chans = all_channels(data, channels);
  double loss[2] = {0, 0}, correct[2] = {0, 0}, count[2] = {0, 0};
  constexpr std::size_t chunk = 128;
  for (std::size_t lo = 0; lo < indices.size(); lo += chunk) {
    const auto part = indices.subspan(lo, std::min(chunk, indices.size() - lo));
    const BatchPrediction p = predict_batch(gather_batch(data, part, chans), part.size(), chans.size(), params);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const int y = data.samples[part[i]].label == 1 ? 1 : 0;
      loss[y] += bce_from_logit(p.logit[i], y);
      correct[y] += (p.probability[i] >= 0.5) == (y == 1) ? 1.0 : 0.0;
      count[y] += 1.0;
    }
  }
  Evaluation e;
  int classes = 0;
  for (int y = 0; y < 2; ++y) {
    if (count[y] == 0) continue;
    e.loss += loss[y] / count[y];
    e.accuracy += correct[y] / count[y];
    ++classes;
  }
  if (classes > 0) {
    e.loss /= classes;
    e.accuracy /= classes;
  }
  return e;
}

TrainedModel fit(const PatientDataset& data, const Fold& fold, const TrainConfig& cfg,
                 std::span<const std::size_t> channels, const ModelConfig& model) {
  cfg.validate();
  const auto chans = all_channels(data, channels);
  if (chans.empty()) throw TrainingError("no channels to train on");
  ModelConfig mc = model;
  mc.seq_len = data.sequence.seq_len;
  mc.n_features = data.feature_count();

  bool has[2] = {false, false};
  for (auto i : fold.train) has[data.samples.at(i).label == 1 ? 1 : 0] = true;
  if (!has[0] || !has[1]) {
    throw TrainingError("fold " + std::to_string(fold.index) + " training set holds a single class (" +
                        (has[1] ? "preictal" : has[0] ? "interictal" : "empty") + ")");
  }

  auto [train, val] = validation_split(data.samples, fold.train, cfg.validation_fraction, cfg.rng_seed ^ 0x5851f42dULL);

  TrainedModel out;
  out.config = cfg;
  out.channels = chans;
  out.train_samples = train.size();
  out.val_samples = val.size();
  ModelParams params = init_model(mc, cfg.rng_seed);
  if (cfg.fit_input_scaler) fit_input_scaler(params, data, train, chans);
  Optimizer opt(params, cfg);

  std::mt19937_64 order_rng(cfg.rng_seed ^ 0x2545f4914f6cdd1dULL);
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const BalancedSet set = balance(data.samples, train, cfg.balance_policy, cfg.rng_seed + epoch);
    const double w_neg = cfg.class_weights ? cfg.class_weights->first : set.weight_interictal;
    const double w_pos = cfg.class_weights ? cfg.class_weights->second : set.weight_preictal;
    std::vector<std::size_t> order = set.indices;
    std::shuffle(order.begin(), order.end(), order_rng);

    EpochStats s;
    s.epoch = epoch;
    double total = 0.0;
    for (std::size_t lo = 0, b = 0; lo < order.size(); lo += cfg.batch_size, ++b) {
      const std::span<const std::size_t> idx(order.data() + lo, std::min(cfg.batch_size, order.size() - lo));
      const Batch batch = make_batch(params, data, idx, chans, w_neg, w_pos);
      total += train_step(params, opt, batch, b) * static_cast<double>(idx.size());
      ++s.batches;
    }
    s.train_loss = total / static_cast<double>(order.size());

    if (!val.empty()) {
      const Evaluation e = evaluate(params, data, val, chans);
      s.val_loss = e.loss;
      s.val_accuracy = e.accuracy;
    } else {
      s.val_loss = s.train_loss;
    }
    out.history.push_back(s);

    if (s.val_loss < best - cfg.early_stop_min_delta) {
      best = s.val_loss;
      out.best_epoch = epoch;
      out.params = params;
      stale = 0;
    } else if (cfg.early_stop_patience > 0 && ++stale >= cfg.early_stop_patience) {
      break;
    }
  }
  if (out.best_epoch == 0) out.params = params;
  return out;
}

std::uint64_t retrain_seed(std::uint64_t seed) noexcept { return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL; }

TrainedModel retrain_selected(const PatientDataset& data, const Fold& fold, const ChannelSelection& selection,
                              const TrainConfig& cfg, const ModelConfig& model) {
  if (!selection.ok()) throw SelectionError("channel selection failed; keeping the all-channel model");
  TrainConfig fresh = cfg;
  fresh.rng_seed = retrain_seed(cfg.rng_seed);
  return fit(data, fold, fresh, selection.channels, model);
}

Prediction predict(const TrainedModel& model, const Tensor& sample) {
  const std::size_t c = model.channels.size(), t = model.params.config.seq_len;
  if (sample.rank() != 2 || sample.rows() != c * t) {
    throw DimensionError("model was trained on " + std::to_string(c) + " channels; sample has " +
                         std::to_string(sample.rank() == 2 ? sample.rows() / t : 0) + " channel blocks");
  }
  return predict(sample, c, model.params);
}

void append_training_log(const std::filesystem::path& path, const std::string& tag, const TrainedModel& model) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open training log " + path.string());
  out.precision(9);
  for (const EpochStats& s : model.history) {
    out << tag << " epoch=" << s.epoch << " train_loss=" << s.train_loss << " val_loss=" << s.val_loss
        << " val_accuracy=" << s.val_accuracy << (s.epoch == model.best_epoch ? " best" : "") << '\n';
  }
}

}  // namespace seizset

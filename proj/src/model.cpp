#include "seizset/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "seizset/errors.hpp"

namespace seizset {

void ModelConfig::validate() const {
  if (seq_len == 0 || n_features == 0 || dim_temporal < 2 || dim_output < 2 || d_k == 0 || d_v == 0 || heads == 0) {
    throw ConfigError("model widths must be positive (layer norm needs widths >= 2)");
  }
  if (d_k % heads != 0 || d_v % heads != 0) {
    throw ConfigError("d_k=" + std::to_string(d_k) + " and d_v=" + std::to_string(d_v) + " must be divisible by " +
                      std::to_string(heads) + " heads");
  }
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

Tensor gaussian_row(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Tensor t({1, dim});
  for (auto& v : t.values()) v = g(rng);
  return t;
}

MabParams init_mab_from(std::size_t d_x, std::size_t d_y, std::size_t d_k, std::size_t d_v, std::size_t heads,
                        std::mt19937_64& rng) {
  MabParams p;
  p.heads = heads;
  p.w_q = xavier(d_x, d_k, rng);
  p.w_k = xavier(d_y, d_k, rng);
  p.w_v = xavier(d_y, d_v, rng);
  p.w_o = xavier(d_v, d_x, rng);
  p.w_h = xavier(d_x, d_x, rng);
  p.b_h = Tensor({1, d_x}, 0.0);
  p.ln1_gain = Tensor({1, d_x}, 1.0);
  p.ln1_bias = Tensor({1, d_x}, 0.0);
  p.ln2_gain = Tensor({1, d_x}, 1.0);
  p.ln2_bias = Tensor({1, d_x}, 0.0);
  return p;
}

}  // namespace

MabParams init_mab(std::size_t d_x, std::size_t d_y, std::size_t d_k, std::size_t d_v, std::size_t heads,
                   std::uint64_t seed) {
  if (heads == 0 || d_k % heads != 0 || d_v % heads != 0) throw DimensionError("d_k and d_v must be divisible by h");
  std::mt19937_64 rng(seed);
  return init_mab_from(d_x, d_y, d_k, d_v, heads, rng);
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.config = config;
  m.kernel_temp = gaussian_row(config.dim_temporal, rng);
  m.temporal = init_mab_from(config.dim_temporal, config.n_features, config.d_k, config.d_v, config.heads, rng);
  m.kernel_channel = gaussian_row(config.dim_output, rng);
  m.channel = init_mab_from(config.dim_output, config.dim_temporal, config.d_k, config.d_v, config.heads, rng);
  m.head_w = xavier(config.dim_output, 1, rng);
  m.head_b = Tensor({1, 1}, 0.0);
  m.input_mean = Tensor({1, config.n_features}, 0.0);
  m.input_scale = Tensor({1, config.n_features}, 1.0);
  return m;
}

namespace {

template <class P, class T>
std::vector<T*> collect(P& m) {
  std::vector<T*> out{&m.kernel_temp};
  for (auto* mp : {&m.temporal, &m.channel}) {
    if (mp == &m.channel) out.push_back(&m.kernel_channel);
    for (auto* t : {&mp->w_q, &mp->w_k, &mp->w_v, &mp->w_o, &mp->w_h, &mp->b_h, &mp->ln1_gain, &mp->ln1_bias,
                    &mp->ln2_gain, &mp->ln2_bias})
      out.push_back(t);
  }
  out.push_back(&m.head_w);
  out.push_back(&m.head_b);
  return out;
}

}  // namespace

std::vector<Tensor*> ModelParams::trainable() { return collect<ModelParams, Tensor>(*this); }
std::vector<const Tensor*> ModelParams::trainable() const { return collect<const ModelParams, const Tensor>(*this); }

std::vector<std::string> ModelParams::trainable_names() {
  std::vector<std::string> names{"kernel_temp"};
  for (std::string stage : {"temporal", "channel"}) {
    if (stage == "channel") names.push_back("kernel_channel");
    for (const char* t : {"w_q", "w_k", "w_v", "w_o", "w_h", "b_h", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"})
      names.push_back(stage + "." + t);
  }
  names.push_back("head_w");
  names.push_back("head_b");
  return names;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : trainable()) n += t->size();
  return n;
}

// ---------------------------------------------------------------------------
// Graph forward

namespace {

MabVars bind_mab(Graph& g, const MabParams& p, bool trainable, std::vector<Var>& all) {
  auto leaf = [&](const Tensor& t) {
    Var v = g.leaf(t, trainable);
    all.push_back(v);
    return v;
  };
  MabVars m;
  m.heads = p.heads;
  m.w_q = leaf(p.w_q);
  m.w_k = leaf(p.w_k);
  m.w_v = leaf(p.w_v);
  m.w_o = leaf(p.w_o);
  m.w_h = leaf(p.w_h);
  m.b_h = leaf(p.b_h);
  m.ln1_gain = leaf(p.ln1_gain);
  m.ln1_bias = leaf(p.ln1_bias);
  m.ln2_gain = leaf(p.ln2_gain);
  m.ln2_bias = leaf(p.ln2_bias);
  return m;
}

}  // namespace

ModelVars bind(Graph& g, const ModelParams& params, bool trainable) {
  ModelVars v;
  v.kernel_temp = g.leaf(params.kernel_temp, trainable);
  v.all.push_back(v.kernel_temp);
  v.temporal = bind_mab(g, params.temporal, trainable, v.all);
  v.kernel_channel = g.leaf(params.kernel_channel, trainable);
  v.all.push_back(v.kernel_channel);
  v.channel = bind_mab(g, params.channel, trainable, v.all);
  v.head_w = g.leaf(params.head_w, trainable);
  v.head_b = g.leaf(params.head_b, trainable);
  v.all.push_back(v.head_w);
  v.all.push_back(v.head_b);
  return v;
}

MabOutput mab(Var x, Var y, const MabVars& p, std::size_t query_set, std::size_t key_set) {
  const std::size_t dx = x.value().cols(), dy = y.value().cols();
  if (dx != p.w_q.value().shape()[0]) {
    throw DimensionError("MAB query width " + std::to_string(dx) + " does not match W_Q " +
                         shape_string(p.w_q.value().shape()));
  }
  if (dy != p.w_k.value().shape()[0]) {
    throw DimensionError("MAB key width " + std::to_string(dy) + " does not match W_K " +
                         shape_string(p.w_k.value().shape()));
  }
  AttentionOutput att = set_attention(matmul(x, p.w_q), matmul(y, p.w_k), matmul(y, p.w_v), p.heads, query_set, key_set);
  Var h = layer_norm(add(x, matmul(att.values, p.w_o)), p.ln1_gain, p.ln1_bias);
  Var ff = relu(add_row(matmul(h, p.w_h), p.b_h));
  return {layer_norm(add(h, ff), p.ln2_gain, p.ln2_bias), std::move(att.weights)};
}

ForwardOutput forward(const ModelVars& p, const ModelConfig& config, Var x, std::size_t batch, std::size_t channels) {
  const Tensor& xv = x.value();
  if (batch == 0 || channels == 0) throw DimensionError("forward needs at least one sample and one channel");
  if (xv.rank() != 2 || xv.cols() != config.n_features || xv.rows() != batch * channels * config.seq_len) {
    throw DimensionError("model input " + shape_string(xv.shape()) + " does not match " + std::to_string(batch) +
                         " samples x " + std::to_string(channels) + " channels x " + std::to_string(config.seq_len) +
                         " steps x " + std::to_string(config.n_features) + " features");
  }
  MabOutput temporal = mab(tile_rows(p.kernel_temp, batch * channels), x, p.temporal, 1, config.seq_len);
  MabOutput channel = mab(tile_rows(p.kernel_channel, batch), temporal.out, p.channel, 1, channels);
  Var logits = add_row(matmul(channel.out, p.head_w), p.head_b);
  return {logits, std::move(channel.weights), std::move(temporal.weights)};
}

Tensor standardize(const ModelParams& params, const Tensor& x) {
  const std::size_t f = params.config.n_features;
  if (x.cols() != f) throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                                          std::to_string(f));
  Tensor out = x;
  const auto& mu = params.input_mean.values();
  const auto& sc = params.input_scale.values();
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mu[i % f]) * sc[i % f];
  return out;
}

// ---------------------------------------------------------------------------
// Value-level wrappers

namespace {

MabVars bind_single(Graph& g, const MabParams& p) {
  std::vector<Var> unused;
  return bind_mab(g, p, false, unused);
}

}  // namespace

MabResult mab_forward(const Tensor& x, const Tensor& y, const MabParams& p) {
  Graph g(false);
  MabOutput o = mab(g.constant(x), g.constant(y), bind_single(g, p), x.rows(), y.rows());
  return {o.out.value(), std::move(o.weights)};
}

Tensor temporal_stage(const Tensor& sequence, const ModelParams& params) {
  if (sequence.rank() != 2 || sequence.rows() != params.config.seq_len) {
    throw DimensionError("temporal stage expects " + std::to_string(params.config.seq_len) + " rows, got " +
                         shape_string(sequence.shape()));
  }
  return mab_forward(params.kernel_temp, sequence, params.temporal).out;
}

ChannelStageResult channel_stage(const Tensor& channel_features, const ModelParams& params) {
  if (channel_features.rank() != 2 || channel_features.rows() == 0) {
    throw DimensionError("channel stage expects C x dim_temporal features, got " + shape_string(channel_features.shape()));
  }
  MabResult r = mab_forward(params.kernel_channel, channel_features, params.channel);
  return {std::move(r.out), std::move(r.attention)};
}

double stable_sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

BatchPrediction predict_batch(const Tensor& batch, std::size_t n_samples, std::size_t channels,
                              const ModelParams& params) {
  Graph g(false);
  ModelVars v = bind(g, params, false);
  ForwardOutput out = forward(v, params.config, g.constant(standardize(params, batch)), n_samples, channels);
  BatchPrediction p;
  const Tensor& logits = out.logits.value();
  for (std::size_t i = 0; i < n_samples; ++i) {
    p.logit.push_back(logits[i]);
    p.probability.push_back(stable_sigmoid(logits[i]));
  }
  p.attention = std::move(out.channel_attention);
  return p;
}

Prediction predict(const Tensor& sample, std::size_t channels, const ModelParams& params) {
  if (channels == 0 || sample.rank() != 2 || sample.rows() != channels * params.config.seq_len) {
    throw DimensionError("sample " + shape_string(sample.shape()) + " does not hold " + std::to_string(channels) +
                         " channels of " + std::to_string(params.config.seq_len) + " steps");
  }
  BatchPrediction b = predict_batch(sample, 1, channels, params);
  return {b.probability[0], std::vector<double>(b.attention.values().begin(), b.attention.values().end())};
}

// ---------------------------------------------------------------------------
// Accumulation and selection

void AttentionAccumulator::accumulate(std::span<const double> row) {
  if (row.size() != sum_.size()) {
    throw DimensionError("attention row has " + std::to_string(row.size()) + " entries, accumulator " +
                         std::to_string(sum_.size()));
  }
  double total = 0.0;
  for (double v : row) total += v;
  if (std::abs(total - 1.0) > 1e-6) throw NumericError("attention row sums to " + std::to_string(total));
  for (std::size_t c = 0; c < row.size(); ++c) sum_[c] += row[c];
  ++count_;
}

void AttentionAccumulator::accumulate_rows(const Tensor& rows) {
  for (std::size_t r = 0; r < rows.rows(); ++r) accumulate(rows.row_view(r));
}

void AttentionAccumulator::merge(const AttentionAccumulator& other) {
  if (other.sum_.size() != sum_.size()) throw DimensionError("cannot merge accumulators of different widths");
  for (std::size_t c = 0; c < sum_.size(); ++c) sum_[c] += other.sum_[c];
  count_ += other.count_;
}

std::vector<double> AttentionAccumulator::mean() const {
  if (count_ == 0) throw StateError("attention accumulator is empty");
  std::vector<double> m(sum_.size());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = sum_[c] / static_cast<double>(count_);
  return m;
}

std::vector<double> AttentionAccumulator::finalize(double temperature) const {
  return attention_softmax(mean(), temperature);
}

std::vector<double> attention_softmax(std::vector<double> m, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("attention temperature must be positive");
  if (m.empty()) throw StateError("attention row is empty");
  const double peak = *std::max_element(m.begin(), m.end());
  double total = 0.0;
  for (auto& v : m) {
    v = std::exp((v - peak) / temperature);
    total += v;
  }
  for (auto& v : m) v /= total;
  return m;
}

std::vector<double> class_balanced_mean(const AttentionAccumulator& interictal, const AttentionAccumulator& preictal) {
  if (interictal.count() == 0) return preictal.mean();
  if (preictal.count() == 0) return interictal.mean();
  if (interictal.channels() != preictal.channels()) throw DimensionError("attention accumulators differ in width");
  std::vector<double> m = interictal.mean();
  const std::vector<double> p = preictal.mean();
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = 0.5 * (m[c] + p[c]);
  return m;
}

ChannelSelection select_channels(std::span<const double> attention, const SelectionPolicy& policy) {
  const std::size_t c = attention.size();
  if (c < 2) throw DimensionError("channel selection needs at least 2 channels");
  ChannelSelection out;
  out.attention.assign(attention.begin(), attention.end());
  const double uniform = 1.0 / static_cast<double>(c);
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return attention[a] > attention[b]; });
  for (auto i : order) {
    if (attention[i] < policy.dominance_factor * uniform || out.channels.size() >= policy.max_channels) break;
    out.channels.push_back(i);
  }
  const double top = attention[order.front()];
  if (out.channels.empty() || top < policy.fail_factor * uniform) {
    out.status = ChannelSelection::Status::failed;
    out.channels.clear();
  } else {
    out.status = ChannelSelection::Status::selected;
    std::sort(out.channels.begin(), out.channels.end());
  }
  return out;
}

std::string format_channels(const std::vector<std::size_t>& channels) {
  std::string s;
  for (std::size_t i = 0; i < channels.size(); ++i) s += (i ? "," : "") + std::to_string(channels[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "seizset-checkpoint 1";

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name;
  for (auto e : t.shape()) out << ' ' << e;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto r = std::to_chars(buf, buf + sizeof buf, t[i]);
    out << (i ? " " : "") << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
  }
  out << '\n';
}

std::vector<std::pair<std::string, Tensor*>> all_arrays(ModelParams& m) {
  std::vector<std::pair<std::string, Tensor*>> out;
  const auto names = ModelParams::trainable_names();
  auto tensors = m.trainable();
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], tensors[i]);
  out.emplace_back("input_mean", &m.input_mean);
  out.emplace_back("input_scale", &m.input_scale);
  return out;
}

std::string config_line(const ModelConfig& c) {
  std::ostringstream s;
  s << "config seq_len=" << c.seq_len << " n_features=" << c.n_features << " dim_temporal=" << c.dim_temporal
    << " dim_output=" << c.dim_output << " d_k=" << c.d_k << " d_v=" << c.d_v << " heads=" << c.heads;
  return s.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << '\n' << config_line(ck.params.config) << '\n';
  out << "channels " << format_channels(ck.channels) << '\n';
  out << "labels";
  for (const auto& l : ck.channel_labels) out << ' ' << l;
  out << '\n';
  for (const auto& [k, v] : ck.metadata) out << "meta " << k << '=' << v << '\n';
  ModelParams copy = ck.params;
  for (auto& [name, t] : all_arrays(copy)) write_tensor(out, name, *t);
  out << "end\n";
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw ParseError(where + ": not a seizset checkpoint");

  Checkpoint ck;
  ModelConfig cfg;
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw ParseError(where + ": missing config line");
  {
    std::istringstream ss(line.substr(7));
    std::string kv;
    std::map<std::string, std::size_t*> fields{{"seq_len", &cfg.seq_len},       {"n_features", &cfg.n_features},
                                               {"dim_temporal", &cfg.dim_temporal}, {"dim_output", &cfg.dim_output},
                                               {"d_k", &cfg.d_k},               {"d_v", &cfg.d_v},
                                               {"heads", &cfg.heads}};
    while (ss >> kv) {
      const auto eq = kv.find('=');
      const auto it = fields.find(kv.substr(0, eq));
      if (eq == std::string::npos || it == fields.end()) throw ParseError(where + ": bad config entry '" + kv + "'");
      *it->second = std::stoul(kv.substr(eq + 1));
    }
  }
  cfg.validate();
  ck.params = init_model(cfg, 0);

  auto arrays = all_arrays(ck.params);
  std::size_t next = 0;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "channels") {
      std::string list;
      ss >> list;
      std::stringstream items(list);
      std::string item;
      while (std::getline(items, item, ',')) ck.channels.push_back(std::stoul(item));
    } else if (key == "labels") {
      std::string l;
      while (ss >> l) ck.channel_labels.push_back(l);
    } else if (key == "meta") {
      std::string rest;
      std::getline(ss >> std::ws, rest);
      const auto eq = rest.find('=');
      if (eq == std::string::npos) throw ParseError(where + ": bad meta line");
      ck.metadata[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (key == "tensor") {
      std::string name;
      ss >> name;
      Shape shape;
      std::size_t e;
      while (ss >> e) shape.push_back(e);
      if (next >= arrays.size() || arrays[next].first != name) {
        throw ParseError(where + ": unexpected array '" + name + "'");
      }
      Tensor& target = *arrays[next].second;
      if (shape != target.shape()) {
        throw ConfigError(where + ": array " + name + " has shape " + shape_string(shape) + ", config implies " +
                          shape_string(target.shape()));
      }
      if (!std::getline(in, line)) throw ParseError(where + ": array " + name + " has no data");
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (std::size_t i = 0; i < target.size(); ++i) {
        while (p < end && *p == ' ') ++p;
        auto [q, ec] = std::from_chars(p, end, target[i]);
        if (ec != std::errc()) throw ParseError(where + ": array " + name + " is truncated");
        p = q;
      }
      ++next;
    } else {
      throw ParseError(where + ": unknown entry '" + key + "'");
    }
  }
  if (next != arrays.size()) throw ParseError(where + ": checkpoint is missing arrays");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.params.config == expected)) {
    throw ConfigError(path.string() + ": checkpoint " + config_line(ck.params.config) + " does not match expected " +
                      config_line(expected));
  }
  return ck;
}

}  // namespace seizset

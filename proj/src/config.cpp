#include "seizset/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "seizset/errors.hpp"

namespace seizset {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

template <class Field>
Entry real(std::string key, Field field) {
  return {std::move(key), [field](const ExperimentConfig& c) { return num(field(const_cast<ExperimentConfig&>(c))); },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); }};
}

template <class Field>
Entry integer(std::string key, Field field) {
  return {std::move(key),
          [field](const ExperimentConfig& c) { return std::to_string(field(const_cast<ExperimentConfig&>(c))); },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_uint(k, v));
          }};
}

template <class Field>
Entry boolean(std::string key, Field field) {
  return {std::move(key),
          [field](const ExperimentConfig& c) { return field(const_cast<ExperimentConfig&>(c)) ? "true" : "false"; },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); }};
}

const std::vector<Entry>& registry() {
  using C = ExperimentConfig;
  static const std::vector<Entry> entries{
      {"data.dir", [](const C& c) { return c.data_dir.string(); },
       [](C& c, const std::string&, const std::string& v) { c.data_dir = v; }},
      {"data.patients", [](const C& c) { return join(c.patients, ','); },
       [](C& c, const std::string&, const std::string& v) { c.patients = split(v, ','); }},
      {"data.channels", [](const C& c) { return c.channels.empty() ? std::string("file") : join(c.channels, ','); },
       [](C& c, const std::string&, const std::string& v) {
         if (v == "file") c.channels.clear();
         else if (v == "canonical") c.channels = canonical_channels();
         else c.channels = split(v, ',');
       }},
      integer("data.csv_sampling_rate", [](C& c) -> int& { return c.csv_sampling_rate; }),

      real("labels.sph_s", [](C& c) -> double& { return c.labels.sph_s; }),
      real("labels.sop_s", [](C& c) -> double& { return c.labels.sop_s; }),
      real("labels.exclusion_s", [](C& c) -> double& { return c.labels.exclusion_s; }),
      real("labels.merge_gap_s", [](C& c) -> double& { return c.labels.merge_gap_s; }),
      real("labels.min_preictal_fraction", [](C& c) -> double& { return c.labels.min_preictal_fraction; }),

      integer("sequence.length", [](C& c) -> std::size_t& { return c.sequence.seq_len; }),
      integer("sequence.stride", [](C& c) -> std::size_t& { return c.sequence.stride; }),

      real("features.window_s", [](C& c) -> double& { return c.features.window_s; }),
      real("features.hop_s", [](C& c) -> double& { return c.features.hop_s; }),
      real("features.notch_lo_hz", [](C& c) -> double& { return c.features.notch_lo_hz; }),
      real("features.notch_hi_hz", [](C& c) -> double& { return c.features.notch_hi_hz; }),
      real("features.max_hz", [](C& c) -> double& { return c.features.max_hz; }),
      {"features.bands", [](const C& c) { return format_bands(c.features.bands); },
       [](C& c, const std::string&, const std::string& v) { c.features.bands = parse_bands(v); }},
      real("features.epsilon", [](C& c) -> double& { return c.features.epsilon; }),

      {"division.kind", [](const C& c) { return std::string(to_string(c.division)); },
       [](C& c, const std::string& k, const std::string& v) {
         try {
           c.division = division_from_string(v);
         } catch (const std::exception& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},

      integer("model.dim_temporal", [](C& c) -> std::size_t& { return c.model.dim_temporal; }),
      integer("model.dim_output", [](C& c) -> std::size_t& { return c.model.dim_output; }),
      integer("model.d_k", [](C& c) -> std::size_t& { return c.model.d_k; }),
      integer("model.d_v", [](C& c) -> std::size_t& { return c.model.d_v; }),
      integer("model.heads", [](C& c) -> std::size_t& { return c.model.heads; }),

      real("train.learning_rate", [](C& c) -> double& { return c.train.learning_rate; }),
      integer("train.batch_size", [](C& c) -> std::size_t& { return c.train.batch_size; }),
      integer("train.max_epochs", [](C& c) -> std::size_t& { return c.train.max_epochs; }),
      integer("train.early_stop_patience", [](C& c) -> std::size_t& { return c.train.early_stop_patience; }),
      real("train.early_stop_min_delta", [](C& c) -> double& { return c.train.early_stop_min_delta; }),
      {"train.balance", [](const C& c) { return std::string(to_string(c.train.balance_policy)); },
       [](C& c, const std::string& k, const std::string& v) {
         try {
           c.train.balance_policy = balance_from_string(v);
         } catch (const std::exception& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"train.optimizer", [](const C& c) { return std::string(to_string(c.train.optimizer)); },
       [](C& c, const std::string&, const std::string& v) { c.train.optimizer = optimizer_from_string(v); }},
      real("train.beta1", [](C& c) -> double& { return c.train.beta1; }),
      real("train.beta2", [](C& c) -> double& { return c.train.beta2; }),
      real("train.adam_epsilon", [](C& c) -> double& { return c.train.adam_epsilon; }),
      {"train.class_weights",
       [](const C& c) {
         return c.train.class_weights ? num(c.train.class_weights->first) + "," + num(c.train.class_weights->second)
                                      : std::string("auto");
       },
       [](C& c, const std::string& k, const std::string& v) {
         if (v == "auto") {
           c.train.class_weights.reset();
           return;
         }
         const auto parts = split(v, ',');
         if (parts.size() != 2) throw ConfigError(k + ": expected 'auto' or '<interictal>,<preictal>'");
         c.train.class_weights = std::make_pair(parse_double(k, parts[0]), parse_double(k, parts[1]));
       }},
      real("train.validation_fraction", [](C& c) -> double& { return c.train.validation_fraction; }),
      boolean("train.fit_input_scaler", [](C& c) -> bool& { return c.train.fit_input_scaler; }),

      real("selection.dominance_factor", [](C& c) -> double& { return c.selection.dominance_factor; }),
      real("selection.fail_factor", [](C& c) -> double& { return c.selection.fail_factor; }),
      integer("selection.max_channels", [](C& c) -> std::size_t& { return c.selection.max_channels; }),
      {"selection.temperature",
       [](const C& c) { return c.selection_temperature ? num(*c.selection_temperature) : std::string("auto"); },
       [](C& c, const std::string& k, const std::string& v) {
         if (v == "auto") c.selection_temperature.reset();
         else c.selection_temperature = parse_double(k, v);
       }},
      {"selection.scope", [](const C& c) { return std::string(to_string(c.selection_scope)); },
       [](C& c, const std::string& k, const std::string& v) {
         try {
           c.selection_scope = selection_scope_from_string(v);
         } catch (const std::exception& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      boolean("selection.retrain", [](C& c) -> bool& { return c.retrain; }),

      real("eval.threshold", [](C& c) -> double& { return c.threshold; }),
      real("eval.persistence_s", [](C& c) -> double& { return c.persistence_s; }),
      real("eval.refractory_s", [](C& c) -> double& { return c.refractory_s; }),
      {"eval.persistence_overrides",
       [](const C& c) {
         std::vector<std::string> parts;
         for (const auto& [p, v] : c.persistence_overrides) parts.push_back(p + ":" + num(v));
         return join(parts, ',');
       },
       [](C& c, const std::string& k, const std::string& v) {
         c.persistence_overrides.clear();
         for (const auto& item : split(v, ',')) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError(k + ": expected patient:seconds, got '" + item + "'");
           c.persistence_overrides[trim(item.substr(0, colon))] = parse_double(k, trim(item.substr(colon + 1)));
         }
       }},

      integer("run.seed", [](C& c) -> std::uint64_t& { return c.seed; }),
      {"run.output_dir", [](const C& c) { return c.output_dir.string(); },
       [](C& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      boolean("run.timestamped", [](C& c) -> bool& { return c.timestamped; }),
      integer("run.threads", [](C& c) -> unsigned& { return c.threads; }),
      boolean("run.artifacts", [](C& c) -> bool& { return c.write_artifacts; }),
  };
  return entries;
}

}  // namespace

const char* to_string(SelectionScope s) { return s == SelectionScope::test ? "test" : "train_balanced"; }

SelectionScope selection_scope_from_string(std::string_view s) {
  if (s == "test") return SelectionScope::test;
  if (s == "train_balanced") return SelectionScope::train_balanced;
  throw ConfigError("unknown selection scope '" + std::string(s) + "' (expected test or train_balanced)");
}

double ExperimentConfig::persistence_for(const std::string& patient) const {
  const auto it = persistence_overrides.find(patient);
  return it == persistence_overrides.end() ? persistence_s : it->second;
}

double ExperimentConfig::temperature_for(std::size_t channels) const {
  return selection_temperature ? *selection_temperature : 1.0 / static_cast<double>(std::max<std::size_t>(channels, 1));
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const Entry& e : registry()) {
    if (e.key == key) {
      e.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::string> ExperimentConfig::lines() const {
  std::vector<std::string> out;
  for (const Entry& e : registry()) out.push_back(e.key + "=" + e.get(*this));
  return out;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (sequence.seq_len < 1 || sequence.stride < 1) throw ConfigError("sequence length and stride must be >= 1");
  if (labels.sph_s < 0 || labels.sop_s <= 0 || labels.exclusion_s < 0 || labels.merge_gap_s < 0)
    throw ConfigError("label durations must be non-negative and the SOP positive");
  if (features.bands.size() < 2) throw ConfigError("at least two frequency bands are required");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("eval.threshold must lie in (0, 1)");
  if (persistence_s < 1.0) throw ConfigError("eval.persistence_s must be >= 1");
  for (const auto& [p, v] : persistence_overrides)
    if (v < 1.0) throw ConfigError("persistence override for " + p + " must be >= 1");
  if (refractory_s < 0.0) throw ConfigError("eval.refractory_s must be >= 0");
  if (selection_temperature && !(*selection_temperature > 0.0)) throw ConfigError("selection.temperature must be > 0");
  if (selection.max_channels < 1) throw ConfigError("selection.max_channels must be >= 1");
  if (csv_sampling_rate <= 0) throw ConfigError("data.csv_sampling_rate must be positive");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source + ":" + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  for (const auto& l : cfg.lines()) out << l << '\n';
}

std::vector<Band> parse_bands(const std::string& text) {
  std::vector<Band> bands;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError("band '" + item + "' is not name:lo:hi");
    Band b{parts[0], parse_double("band " + parts[0], parts[1]), parse_double("band " + parts[0], parts[2])};
    if (!(b.lo_hz >= 0.0 && b.hi_hz > b.lo_hz)) throw ConfigError("band '" + item + "' has an empty range");
    bands.push_back(b);
  }
  return bands;
}

std::string format_bands(const std::vector<Band>& bands) {
  std::vector<std::string> parts;
  for (const Band& b : bands) parts.push_back(b.name + ":" + num(b.lo_hz) + ":" + num(b.hi_hz));
  return join(parts, ',');
}

}  // namespace seizset

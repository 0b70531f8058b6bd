#include "seizset/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "seizset/errors.hpp"

namespace seizset {

void ProbabilityTrace::push(double t, double p, bool pos, Period l) {
  t_s.push_back(t);
  probability.push_back(p);
  positive.push_back(pos ? 1 : 0);
  label.push_back(l);
}

void ProbabilityTrace::validate() const {
  const std::size_t n = t_s.size();
  if (probability.size() != n || positive.size() != n || label.size() != n)
    throw ValidationError("trace tracks differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (t_s[i] != std::floor(t_s[i])) throw ValidationError("trace time " + std::to_string(t_s[i]) + " is not whole");
    if (i > 0 && !(t_s[i] > t_s[i - 1])) throw ValidationError("trace time does not increase at row " + std::to_string(i));
  }
}

Period window_label(const FeatureTimeline& timeline, std::size_t anchor, const SequenceConfig& seq) {
  const Period first = timeline.labels.at(anchor);
  bool same = true, ictal = false;
  for (std::size_t j = 0; j < seq.seq_len; ++j) {
    const Period p = timeline.labels.at(anchor + j * seq.stride);
    same = same && p == first;
    ictal = ictal || p == Period::ictal;
  }
  if (same) return first;
  return ictal ? Period::ictal : Period::excluded;
}

namespace {

void check_channels(const TrainedModel& model, const FeatureTimeline& timeline) {
  if (model.channels.empty()) throw DimensionError("model has no channels");
  for (auto c : model.channels)
    if (c >= timeline.n_channels)
      throw DimensionError("model channel " + std::to_string(c) + " is not present in a timeline with " +
                           std::to_string(timeline.n_channels) + " channels");
  if (timeline.n_features != model.params.config.n_features)
    throw DimensionError("timeline has " + std::to_string(timeline.n_features) + " features, model expects " +
                         std::to_string(model.params.config.n_features));
}

}  // namespace

ProbabilityTrace infer_stream(const TrainedModel& model, const FeatureTimeline& timeline, double threshold,
                              const SequenceConfig& seq, double offset_s) {
  check_channels(model, timeline);
  if (seq.seq_len != model.params.config.seq_len) throw DimensionError("sequence length differs from the model's");
  const std::size_t span = seq.span();
  if (timeline.n_times < span) {
    throw DimensionError("timeline of " + std::to_string(timeline.n_times) + " stamps is shorter than one " +
                         std::to_string(seq.duration_s()) + "-s window");
  }
  const std::size_t n = timeline.n_times - span + 1, c = model.channels.size(), f = timeline.n_features;
  ProbabilityTrace trace;
  constexpr std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    const std::size_t b = std::min(chunk, n - lo);
    Tensor x({b * c * seq.seq_len, f});
    double* dst = x.values().data();
    for (std::size_t a = lo; a < lo + b; ++a)
      for (auto ch : model.channels)
        for (std::size_t j = 0; j < seq.seq_len; ++j) {
          const auto row = timeline.at(a + j * seq.stride, ch);
          dst = std::copy(row.begin(), row.end(), dst);
        }
    const BatchPrediction p = predict_batch(x, b, c, model.params);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t a = lo + i;
      const Period label = timeline.labels.size() == timeline.n_times ? window_label(timeline, a, seq) : Period::excluded;
      trace.push(offset_s + timeline.timestamp(a) + static_cast<double>(span), p.probability[i],
                 p.probability[i] >= threshold, label);
    }
  }
  return trace;
}

ProbabilityTrace fold_trace(const TrainedModel& model, const PatientDataset& data, const Fold& fold, double threshold,
                            AttentionAccumulator* attention) {
  std::vector<std::size_t> order(fold.test.begin(), fold.test.end());
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return data.samples.at(a).anchor_time_s < data.samples.at(b).anchor_time_s;
  });
  ProbabilityTrace trace;
  constexpr std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < order.size(); lo += chunk) {
    const std::span<const std::size_t> part(order.data() + lo, std::min(chunk, order.size() - lo));
    const Tensor x = gather_batch(data, part, model.channels);
    const BatchPrediction p = predict_batch(x, part.size(), model.channels.size(), model.params);
    if (attention) attention->accumulate_rows(p.attention);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const SequenceSample& s = data.samples[part[i]];
      trace.push(trace_time(s.anchor_time_s, data.sequence), p.probability[i], p.probability[i] >= threshold,
                 s.label == 1 ? Period::preictal : Period::interictal);
    }
  }
  return trace;
}

void accumulate_class_attention(const TrainedModel& model, const PatientDataset& data,
                                std::span<const std::size_t> samples, AttentionAccumulator& interictal,
                                AttentionAccumulator& preictal) {
  constexpr std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < samples.size(); lo += chunk) {
    const auto part = samples.subspan(lo, std::min(chunk, samples.size() - lo));
    const Tensor x = gather_batch(data, part, model.channels);
    const BatchPrediction p = predict_batch(x, part.size(), model.channels.size(), model.params);
    for (std::size_t i = 0; i < part.size(); ++i)
      (data.samples.at(part[i]).label == 1 ? preictal : interictal).accumulate(p.attention.row_view(i));
  }
}

std::vector<Alarm> alarms_from_trace(const ProbabilityTrace& trace, double persistence_s, double refractory_s) {
  if (!(persistence_s >= 1.0)) throw ValidationError("persistence must be at least 1 s");
  std::vector<Alarm> alarms;
  double run_start = 0.0;
  bool in_run = false;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace.positive[i]) {
      in_run = false;
      continue;
    }
    const bool continues = in_run && trace.t_s[i] == trace.t_s[i - 1] + 1.0;
    if (!continues) run_start = trace.t_s[i];
    in_run = true;
    if (trace.t_s[i] - run_start + 1.0 < persistence_s) continue;
    if (!alarms.empty() && trace.t_s[i] - alarms.back().trigger_time_s < refractory_s) continue;
    alarms.push_back({trace.t_s[i], run_start});
  }
  return alarms;
}

EvalCounts& EvalCounts::operator+=(const EvalCounts& o) {
  tp += o.tp;
  fn += o.fn;
  fp += o.fp;
  interictal_hours += o.interictal_hours;
  return *this;
}

EvalCounts score_events(const std::vector<Alarm>& alarms, std::span<const Period> alarm_labels,
                        std::span<const double> onsets, double interictal_seconds, const ScoringConfig& cfg) {
  if (alarm_labels.size() != alarms.size()) throw DimensionError("one label per alarm is required");
  std::vector<bool> hit(onsets.size(), false);
  EvalCounts c;
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    const double a = alarms[i].trigger_time_s;
    bool correct = false;
    for (std::size_t j = 0; j < onsets.size(); ++j) {
      if (a + cfg.sph_s < onsets[j] && onsets[j] <= a + cfg.sph_s + cfg.sop_s) {
        hit[j] = true;
        correct = true;
      }
    }
    if (!correct && alarm_labels[i] == Period::interictal) ++c.fp;
  }
  c.tp = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  c.fn = onsets.size() - c.tp;
  c.interictal_hours = interictal_seconds / 3600.0;
  return c;
}

EvalCounts score_events(const std::vector<Alarm>& alarms, std::span<const double> onsets,
                        const PeriodLabeling& labeling, const ScoringConfig& cfg) {
  std::vector<Period> labels;
  for (const Alarm& a : alarms) labels.push_back(labeling.at(static_cast<long long>(std::floor(a.trigger_time_s))));
  return score_events(alarms, labels, onsets, static_cast<double>(labeling.count(Period::interictal)), cfg);
}

EvalCounts score_trace(const ProbabilityTrace& trace, const std::vector<Alarm>& alarms,
                       std::span<const double> onsets, const ScoringConfig& cfg) {
  std::vector<Period> labels;
  for (const Alarm& a : alarms) {
    const auto it = std::lower_bound(trace.t_s.begin(), trace.t_s.end(), a.trigger_time_s);
    if (it == trace.t_s.end() || *it != a.trigger_time_s) throw ValidationError("alarm time is not on the trace");
    labels.push_back(trace.label[static_cast<std::size_t>(it - trace.t_s.begin())]);
  }
  const auto inter = std::count(trace.label.begin(), trace.label.end(), Period::interictal);
  return score_events(alarms, labels, onsets, static_cast<double>(inter), cfg);
}

std::optional<double> sensitivity(const EvalCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> fpr(const EvalCounts& c) {
  if (!(c.interictal_hours > 0.0)) return std::nullopt;
  return static_cast<double>(c.fp) / c.interictal_hours;
}

double shifted_baseline_sensitivity(const ProbabilityTrace& trace, std::span<const double> onsets,
                                    double persistence_s, double refractory_s, const ScoringConfig& cfg,
                                    std::size_t shifts, std::uint64_t seed) {
  if (trace.size() == 0 || shifts == 0) return 0.0;
  std::mt19937_64 rng(seed);
  ProbabilityTrace shifted = trace;
  double total = 0.0;
  std::size_t defined = 0;
  const std::size_t n = trace.size();
  for (std::size_t k = 0; k < shifts; ++k) {
    const std::size_t off = static_cast<std::size_t>(rng() % n);
    for (std::size_t i = 0; i < n; ++i) shifted.positive[i] = trace.positive[(i + off) % n];
    const EvalCounts c = score_trace(shifted, alarms_from_trace(shifted, persistence_s, refractory_s), onsets, cfg);
    if (const auto s = sensitivity(c)) {
      total += *s;
      ++defined;
    }
  }
  return defined ? total / static_cast<double>(defined) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports

SummaryRow aggregate(const std::vector<PatientResult>& patients, AggregateMode mode, bool selected) {
  SummaryRow row;
  row.label = mode == AggregateMode::mean ? "Mean" : "All";
  double sen_sum = 0.0, fpr_sum = 0.0;
  std::size_t sen_n = 0, fpr_n = 0;
  for (const PatientResult& p : patients) {
    if (p.status != "ok") continue;
    const EvalCounts& c = selected && p.selected ? *p.selected : p.all_channels;
    row.counts += c;
    if (const auto s = sensitivity(c)) {
      sen_sum += *s;
      ++sen_n;
    }
    if (const auto f = fpr(c)) {
      fpr_sum += *f;
      ++fpr_n;
    }
  }
  if (mode == AggregateMode::all) {
    row.sensitivity = sensitivity(row.counts);
    row.fpr = fpr(row.counts);
  } else {
    if (sen_n) row.sensitivity = sen_sum / static_cast<double>(sen_n);
    if (fpr_n) row.fpr = fpr_sum / static_cast<double>(fpr_n);
  }
  return row;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string fixed(std::optional<double> v, int digits) {
  if (!v) return "N/A";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

std::string round_trip(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string count_cells(const EvalCounts& c) {
  return std::to_string(c.tp) + "," + std::to_string(c.fn) + "," + std::to_string(c.fp) + "," +
         fixed(fpr(c), 4) + "," + fixed(sensitivity(c), 1);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path, const ProbabilityTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  if (!trace.onsets_s.empty()) {
    out << "# onsets_s=";
    for (std::size_t i = 0; i < trace.onsets_s.size(); ++i) out << (i ? "," : "") << round_trip(trace.onsets_s[i]);
    out << '\n';
  }
  out << "t_s,probability,positive,label\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << round_trip(trace.t_s[i]) << ',' << round_trip(trace.probability[i]) << ','
        << static_cast<int>(trace.positive[i]) << ',' << to_string(trace.label[i]) << '\n';
  }
  if (!out) throw IoError("failed writing trace " + path.string());
}

ProbabilityTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  std::string line;
  ProbabilityTrace trace;
  std::size_t lineno = 0;
  while (std::getline(in, line) && !line.empty() && line[0] == '#') {
    ++lineno;
    const std::string key = "# onsets_s=";
    if (line.rfind(key, 0) != 0) continue;
    std::stringstream ss(line.substr(key.size()));
    for (std::string cell; std::getline(ss, cell, ',');) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad onset '" + cell + "'");
      trace.onsets_s.push_back(v);
    }
  }
  ++lineno;
  if (line != "t_s,probability,positive,label")
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected header t_s,probability,positive,label");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    double t = 0, p = 0;
    auto parse = [&](const std::string& s, double& v) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    };
    parse(cells[0], t);
    parse(cells[1], p);
    if (cells[2] != "0" && cells[2] != "1")
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": positive must be 0 or 1");
    Period l;
    try {
      l = period_from_string(cells[3]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": unknown label '" + cells[3] + "'");
    }
    trace.push(t, p, cells[2] == "1", l);
  }
  trace.validate();
  return trace;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<PatientResult>& patients,
                      const std::vector<std::string>& config_lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  for (const auto& l : config_lines) out << "# " << l << '\n';
  out << "patient,status,seizures,interictal_hours,tp,fn,fp,fpr_per_h,sensitivity_pct,selection,selected_channels,"
         "sel_tp,sel_fn,sel_fp,sel_fpr_per_h,sel_sensitivity_pct\n";
  for (const PatientResult& p : patients) {
    out << csv_cell(p.patient) << ',' << csv_cell(p.status) << ',' << p.seizures << ',';
    if (p.status != "ok") {
      out << "N/A,,,,N/A,N/A,-,-,,,,N/A,N/A\n";
      continue;
    }
    const EvalCounts& sel = p.selected ? *p.selected : p.all_channels;
    out << fixed(p.all_channels.interictal_hours, 4) << ',' << count_cells(p.all_channels) << ','
        << (p.selection_status.empty() ? "-" : p.selection_status) << ','
        << (p.selected_channels.empty() ? "-" : csv_cell(p.selected_channels)) << ',' << count_cells(sel) << '\n';
  }
  for (AggregateMode mode : {AggregateMode::mean, AggregateMode::all}) {
    const SummaryRow a = aggregate(patients, mode, false), s = aggregate(patients, mode, true);
    std::size_t seizures = 0;
    for (const auto& p : patients)
      if (p.status == "ok") seizures += p.seizures;
    out << a.label << ",ok," << seizures << ',' << fixed(a.counts.interictal_hours, 4) << ',';
    if (mode == AggregateMode::all) {
      out << a.counts.tp << ',' << a.counts.fn << ',' << a.counts.fp << ',';
    } else {
      out << ",,,";
    }
    out << fixed(a.fpr, 4) << ',' << fixed(a.sensitivity, 1) << ",-,";
    // Average number of selected channels over patients whose selection succeeded.
    double chans = 0.0;
    std::size_t sel_n = 0;
    for (const auto& p : patients)
      if (p.status == "ok" && p.selected) {
        chans += static_cast<double>(std::count(p.selected_channels.begin(), p.selected_channels.end(), ',') + 1);
        ++sel_n;
      }
    out << (sel_n ? fixed(chans / static_cast<double>(sel_n), 1) : std::string("-")) << ',';
    if (mode == AggregateMode::all) {
      out << s.counts.tp << ',' << s.counts.fn << ',' << s.counts.fp << ',';
    } else {
      out << ",,,";
    }
    out << fixed(s.fpr, 4) << ',' << fixed(s.sensitivity, 1) << '\n';
  }
  if (!out) throw IoError("failed writing report " + path.string());
}

std::vector<PlotSpan> preictal_spans(const ProbabilityTrace& trace) {
  std::vector<PlotSpan> spans;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.label[i] != Period::preictal) continue;
    if (!spans.empty() && i > 0 && trace.label[i - 1] == Period::preictal && trace.t_s[i] == trace.t_s[i - 1] + 1.0) {
      spans.back().end_s = trace.t_s[i] + 1.0;
    } else {
      spans.push_back({trace.t_s[i], trace.t_s[i] + 1.0});
    }
  }
  return spans;
}

void write_trace_svg(const std::filesystem::path& path, const ProbabilityTrace& trace,
                     const std::vector<Alarm>& alarms, const std::string& title, double threshold) {
  constexpr double W = 1000, H = 320, L = 60, R = 20, T = 40, B = 40;
  const double t0 = trace.size() ? trace.t_s.front() : 0.0;
  const double t1 = trace.size() ? std::max(trace.t_s.back() + 1.0, t0 + 1.0) : 1.0;
  auto x = [&](double t) { return L + (t - t0) / (t1 - t0) * (W - L - R); };
  auto y = [&](double p) { return T + (1.0 - p) * (H - T - B); };
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot " + path.string());
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  for (const PlotSpan& s : preictal_spans(trace)) {
    out << "<rect class=\"preictal\" x=\"" << x(s.begin_s) << "\" y=\"" << T << "\" width=\""
        << std::max(0.5, x(s.end_s) - x(s.begin_s)) << "\" height=\"" << H - T - B
        << "\" fill=\"#f4c7c3\" opacity=\"0.7\"/>\n";
  }
  out << "<line x1=\"" << L << "\" y1=\"" << y(threshold) << "\" x2=\"" << W - R << "\" y2=\"" << y(threshold)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  // Polyline segments break at gaps; long traces are decimated to ~4000 points.
  const std::size_t step = std::max<std::size_t>(1, trace.size() / 4000);
  bool open = false;
  for (std::size_t i = 0; i < trace.size(); i += step) {
    const bool gap = i > 0 && trace.t_s[i] - trace.t_s[i - step] > static_cast<double>(step);
    if (open && gap) {
      out << "\"/>\n";
      open = false;
    }
    if (!open) {
      out << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"";
      open = true;
    }
    out << x(trace.t_s[i]) << ',' << y(trace.probability[i]) << ' ';
  }
  if (open) out << "\"/>\n";
  for (const Alarm& a : alarms) {
    out << "<line class=\"alarm\" x1=\"" << x(a.trigger_time_s) << "\" y1=\"" << T << "\" x2=\"" << x(a.trigger_time_s)
        << "\" y2=\"" << H - B << "\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
  }
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << y(1.0) + 4 << "\" font-family=\"sans-serif\" font-size=\"11\" "
      << "text-anchor=\"end\">1</text>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << y(0.0) + 4 << "\" font-family=\"sans-serif\" font-size=\"11\" "
      << "text-anchor=\"end\">0</text>\n"
      << "<text x=\"" << L << "\" y=\"" << H - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">" << t0
      << " s</text>\n"
      << "<text x=\"" << W - R << "\" y=\"" << H - 12 << "\" font-family=\"sans-serif\" font-size=\"11\" "
      << "text-anchor=\"end\">" << t1 << " s</text>\n"
      << "</svg>\n";
  if (!out) throw IoError("failed writing plot " + path.string());
}

// ---------------------------------------------------------------------------
// Streaming

StreamPredictor::StreamPredictor(TrainedModel model, int sampling_rate, const FeatureConfig& features,
                                 const SequenceConfig& seq)
    : model_(std::move(model)),
      fs_(sampling_rate),
      features_(features),
      seq_(seq),
      periodogram_(static_cast<std::size_t>(std::llround(features.window_s * sampling_rate)), sampling_rate) {
  if (features.feature_count() != model_.params.config.n_features)
    throw DimensionError("feature configuration does not match the model");
  if (features.hop_s != 1.0 || features.window_s != 2.0)
    throw ConfigError("streaming assumes 2-s windows at a 1-s hop");
  freqs_ = periodogram_.frequencies();
  power_.resize(periodogram_.bin_count());
  window_.resize(2 * static_cast<std::size_t>(fs_));
}

std::optional<Prediction> StreamPredictor::push(const std::vector<std::vector<double>>& second) {
  const std::size_t c = model_.channels.size(), fs = static_cast<std::size_t>(fs_);
  if (second.size() != c) {
    throw DimensionError("stream expects " + std::to_string(c) + " channels, got " + std::to_string(second.size()));
  }
  for (const auto& ch : second)
    if (ch.size() != fs) throw DimensionError("stream expects " + std::to_string(fs) + " samples per channel");
  if (previous_.empty()) {
    previous_ = second;
    return std::nullopt;
  }
  const std::size_t f = features_.feature_count();
  std::vector<double> stamp(c * f);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::copy(previous_[ch].begin(), previous_[ch].end(), window_.begin());
    std::copy(second[ch].begin(), second[ch].end(), window_.begin() + static_cast<std::ptrdiff_t>(fs));
    periodogram_.compute(window_, power_);
    apply_band_masks(power_, freqs_, features_);
    band_powers(power_, freqs_, features_, std::span<double>(stamp).subspan(ch * f, f));
  }
  previous_ = second;
  history_.push_back(std::move(stamp));
  ++stamps_;
  const std::size_t span = seq_.span();
  if (history_.size() > span) history_.pop_front();
  if (history_.size() < span) return std::nullopt;

  Tensor x({c * seq_.seq_len, f});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < seq_.seq_len; ++j) {
      const auto& row = history_[j * seq_.stride];
      std::copy(row.begin() + static_cast<std::ptrdiff_t>(ch * f), row.begin() + static_cast<std::ptrdiff_t>((ch + 1) * f),
                &x.at(ch * seq_.seq_len + j, 0));
    }
  return predict(x, c, model_.params);
}

}  // namespace seizset

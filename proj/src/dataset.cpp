#include "seizset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "seizset/errors.hpp"

namespace seizset {

// ---------------------------------------------------------------------------
// Merging and labeling

namespace {

template <class Event>
std::vector<MergedSeizure> merge_impl(const std::vector<Event>& events, double gap_s, auto constituents) {
  std::vector<MergedSeizure> out;
  for (const auto& e : events) {
    if (!out.empty() && e.onset_s - out.back().end_s < gap_s) {
      out.back().end_s = std::max(out.back().end_s, e.end_s);
      out.back().constituents += constituents(e);
    } else {
      out.push_back({e.onset_s, e.end_s, constituents(e)});
    }
  }
  return out;
}

}  // namespace

std::vector<MergedSeizure> merge_seizures(const std::vector<Seizure>& events, double gap_s) {
  return merge_impl(events, gap_s, [](const Seizure&) { return 1; });
}

std::vector<MergedSeizure> merge_seizures(const std::vector<MergedSeizure>& events, double gap_s) {
  return merge_impl(events, gap_s, [](const MergedSeizure& m) { return m.constituents; });
}

Period PeriodLabeling::at(long long t) const noexcept {
  const double rel = static_cast<double>(t) - start_s;
  if (rel < 0 || rel >= static_cast<double>(labels.size())) return Period::excluded;
  return labels[static_cast<std::size_t>(rel)];
}

std::size_t PeriodLabeling::count(Period p) const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), p));
}

namespace {

/// Raises seconds whose start lies in [a, b) to at least `p`.
void paint(std::vector<Period>& labels, double a, double b, Period p) {
  const auto n = static_cast<long long>(labels.size());
  const long long first = std::max(0LL, static_cast<long long>(std::ceil(a)));
  const long long last = std::min(n, static_cast<long long>(std::ceil(b)));
  for (long long s = first; s < last; ++s) {
    auto& l = labels[static_cast<std::size_t>(s)];
    l = std::max(l, p);
  }
}

}  // namespace

PeriodLabeling label_timeline(double duration_s, const std::vector<MergedSeizure>& merged, const LabelConfig& config) {
  PeriodLabeling out;
  out.labels.assign(static_cast<std::size_t>(std::max(0.0, std::ceil(duration_s))), Period::interictal);
  for (const auto& m : merged) {
    paint(out.labels, m.onset_s - config.exclusion_s, m.onset_s, Period::excluded);
    paint(out.labels, m.end_s, m.end_s + config.exclusion_s, Period::excluded);
    paint(out.labels, m.onset_s - config.sph_s - config.sop_s, m.onset_s - config.sph_s, Period::preictal);
    paint(out.labels, m.onset_s, m.end_s, Period::ictal);
  }
  return out;
}

void label_stamps(FeatureTimeline& timeline, const PeriodLabeling& labeling, long long offset_s) {
  timeline.labels.resize(timeline.n_times);
  const auto base = offset_s + static_cast<long long>(std::llround(timeline.start_s));
  for (std::size_t k = 0; k < timeline.n_times; ++k) {
    const long long s = base + static_cast<long long>(k);
    const Period a = labeling.at(s), b = labeling.at(s + 1);
    timeline.labels[k] = a == b ? a : Period::excluded;
  }
}

// ---------------------------------------------------------------------------
// Samples

std::vector<SequenceSample> build_sequences(const FeatureTimeline& timeline, const SequenceConfig& config,
                                            std::size_t record, double offset_s, const std::vector<double>& onsets) {
  if (config.seq_len == 0 || config.stride == 0) throw DimensionError("sequence length and stride must be positive");
  std::vector<SequenceSample> out;
  const std::size_t span = config.span();
  if (timeline.labels.size() != timeline.n_times) throw StateError("timeline labels do not match its length");
  for (std::size_t a = 0; a + span <= timeline.n_times; ++a) {
    const Period first = timeline.labels[a];
    if (first != Period::preictal && first != Period::interictal) continue;
    bool pure = true;
    for (std::size_t j = 1; j < config.seq_len && pure; ++j) pure = timeline.labels[a + j * config.stride] == first;
    if (!pure) continue;
    SequenceSample s;
    s.record = record;
    s.anchor = a;
    s.anchor_time_s = offset_s + timeline.timestamp(a);
    s.label = first == Period::preictal ? 1 : 0;
    const auto next = std::upper_bound(onsets.begin(), onsets.end(), s.anchor_time_s);
    s.seizure = next == onsets.end() ? -1 : static_cast<int>(next - onsets.begin());
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Division

const char* to_string(DivisionKind k) { return k == DivisionKind::even ? "even" : "seizure-independent"; }

DivisionKind division_from_string(std::string_view s) {
  if (s == "even") return DivisionKind::even;
  if (s == "seizure-independent" || s == "independent") return DivisionKind::seizure_independent;
  throw ConfigError("unknown division kind '" + std::string(s) + "'");
}

namespace {

std::vector<std::vector<std::size_t>> preictal_by_seizure(const std::vector<SequenceSample>& samples, std::size_t n) {
  std::vector<std::vector<std::size_t>> by(n);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label != 1) continue;
    if (samples[i].seizure < 0 || static_cast<std::size_t>(samples[i].seizure) >= n) {
      throw DivisionError("preictal sample at " + std::to_string(samples[i].anchor_time_s) +
                          " s is not attached to any seizure");
    }
    by[static_cast<std::size_t>(samples[i].seizure)].push_back(i);
  }
  return by;
}

void fill_train(Fold& f, std::size_t total) {
  std::sort(f.test.begin(), f.test.end());
  std::size_t t = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (t < f.test.size() && f.test[t] == i) {
      ++t;
    } else {
      f.train.push_back(i);
    }
  }
}

}  // namespace

std::vector<Fold> split_even(const std::vector<SequenceSample>& samples, std::size_t n_seizures) {
  if (n_seizures < 2) {
    throw DivisionError("even division needs at least 2 seizures, got " + std::to_string(n_seizures));
  }
  const auto pre = preictal_by_seizure(samples, n_seizures);
  std::vector<std::size_t> inter;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].label == 0) inter.push_back(i);
  std::vector<Fold> folds(n_seizures);
  for (std::size_t k = 0; k < n_seizures; ++k) {
    Fold& f = folds[k];
    f.index = f.held_out_seizure = static_cast<int>(k);
    f.kind = DivisionKind::even;
    f.test = pre[k];
    const std::size_t lo = k * inter.size() / n_seizures, hi = (k + 1) * inter.size() / n_seizures;
    f.test.insert(f.test.end(), inter.begin() + static_cast<std::ptrdiff_t>(lo),
                  inter.begin() + static_cast<std::ptrdiff_t>(hi));
    fill_train(f, samples.size());
  }
  return folds;
}

std::vector<Fold> split_seizure_independent(const std::vector<SequenceSample>& samples, std::size_t n_seizures) {
  if (n_seizures == 0) throw DivisionError("seizure-independent division needs seizures");
  const auto pre = preictal_by_seizure(samples, n_seizures);
  std::vector<std::vector<std::size_t>> inter(n_seizures);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label != 0) continue;
    const auto k = samples[i].seizure < 0 ? n_seizures - 1 : static_cast<std::size_t>(samples[i].seizure);
    inter[std::min(k, n_seizures - 1)].push_back(i);
  }
  const auto periods = static_cast<std::size_t>(
      std::count_if(inter.begin(), inter.end(), [](const auto& v) { return !v.empty(); }));
  if (periods < 3) {
    throw DivisionError("fewer than 3 seizure-independent interictal periods (found " + std::to_string(periods) + ")");
  }
  std::vector<Fold> folds(n_seizures);
  for (std::size_t k = 0; k < n_seizures; ++k) {
    Fold& f = folds[k];
    f.index = f.held_out_seizure = static_cast<int>(k);
    f.kind = DivisionKind::seizure_independent;
    f.preictal_only = inter[k].empty();
    f.test = pre[k];
    f.test.insert(f.test.end(), inter[k].begin(), inter[k].end());
    fill_train(f, samples.size());
  }
  return folds;
}

std::vector<Fold> divide(const std::vector<SequenceSample>& samples, std::size_t n_seizures, DivisionKind kind) {
  return kind == DivisionKind::even ? split_even(samples, n_seizures)
                                    : split_seizure_independent(samples, n_seizures);
}

// ---------------------------------------------------------------------------
// Balancing

const char* to_string(BalancePolicy p) { return p == BalancePolicy::undersample ? "undersample" : "weighted"; }

BalancePolicy balance_from_string(std::string_view s) {
  if (s == "undersample") return BalancePolicy::undersample;
  if (s == "weighted") return BalancePolicy::weighted;
  throw ConfigError("unknown balance policy '" + std::string(s) + "'");
}

BalancedSet balance(const std::vector<SequenceSample>& samples, std::span<const std::size_t> indices,
                    BalancePolicy policy, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (auto i : indices) (samples.at(i).label == 1 ? pos : neg).push_back(i);
  if (pos.empty()) throw BalanceError("class 'preictal' is absent from the training set");
  if (neg.empty()) throw BalanceError("class 'interictal' is absent from the training set");

  BalancedSet out;
  if (policy == BalancePolicy::weighted) {
    out.indices.assign(indices.begin(), indices.end());
    const double n = static_cast<double>(indices.size());
    const double w_neg = n / static_cast<double>(neg.size()), w_pos = n / static_cast<double>(pos.size());
    const double mean = 0.5 * (w_neg + w_pos);
    out.weight_interictal = w_neg / mean;
    out.weight_preictal = w_pos / mean;
  } else {
    auto& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    if (major.size() > keep) {
      std::mt19937_64 rng(seed);
      std::shuffle(major.begin(), major.end(), rng);
      major.resize(keep);
    }
    out.indices = pos;
    out.indices.insert(out.indices.end(), neg.begin(), neg.end());
  }
  std::sort(out.indices.begin(), out.indices.end());
  for (auto i : out.indices) (samples[i].label == 1 ? out.count_preictal : out.count_interictal)++;
  return out;
}

// ---------------------------------------------------------------------------
// Patient assembly

std::size_t PatientDataset::channel_count() const { return records.empty() ? 0 : records.front().timeline.n_channels; }
std::size_t PatientDataset::feature_count() const { return records.empty() ? 0 : records.front().timeline.n_features; }

PatientDataset assemble_patient(std::string patient_id, std::vector<RecordTimeline> records,
                                const std::vector<Seizure>& events, const LabelConfig& labels,
                                const SequenceConfig& sequence) {
  if (records.empty()) throw RecordError("patient " + patient_id + " has no records");
  PatientDataset d;
  d.patient_id = std::move(patient_id);
  d.sequence = sequence;
  d.records = std::move(records);

  const auto& first = d.records.front().timeline;
  double duration = 0.0;
  for (auto& r : d.records) {
    if (r.timeline.n_channels != first.n_channels || r.timeline.n_features != first.n_features ||
        r.timeline.channel_labels != first.channel_labels) {
      throw ChannelError("record " + r.id + " does not share the channel layout of record " + d.records.front().id);
    }
    if (r.offset_s < 0 || r.offset_s != std::round(r.offset_s)) {
      throw RecordError("record " + r.id + " offset must be a non-negative whole number of seconds");
    }
    duration = std::max(duration, r.offset_s + r.timeline.start_s + static_cast<double>(r.timeline.n_times) + 1.0);
  }

  std::vector<Seizure> sorted = events;
  std::sort(sorted.begin(), sorted.end(), [](const Seizure& a, const Seizure& b) { return a.onset_s < b.onset_s; });
  d.merged = merge_seizures(sorted, labels.merge_gap_s);
  duration = std::max(duration, d.merged.empty() ? 0.0 : d.merged.back().end_s);
  d.labeling = label_timeline(duration, d.merged, labels);

  std::vector<char> covered(d.labeling.size(), 0);
  for (const auto& r : d.records) {
    const auto from = static_cast<std::size_t>(r.offset_s + r.timeline.start_s);
    const std::size_t to = std::min(covered.size(), from + r.timeline.n_times + 1);
    for (std::size_t s = from; s < to; ++s) covered[s] = 1;
  }

  // Omit seizures with too little preictal data; their preictal span becomes
  // excluded so it yields neither samples nor false alarms.
  for (const auto& m : d.merged) {
    const double a = m.onset_s - labels.sph_s - labels.sop_s, b = m.onset_s - labels.sph_s;
    const auto first_s = static_cast<std::size_t>(std::max(0.0, std::ceil(a)));
    const auto last_s = std::min(d.labeling.size(), static_cast<std::size_t>(std::max(0.0, std::ceil(b))));
    std::size_t available = 0;
    for (std::size_t s = first_s; s < last_s; ++s)
      if (covered[s] && d.labeling.labels[s] == Period::preictal) ++available;
    if (static_cast<double>(available) >= labels.min_preictal_fraction * labels.sop_s && available > 0) {
      d.seizures.push_back(m);
    } else {
      for (std::size_t s = first_s; s < last_s; ++s)
        if (d.labeling.labels[s] == Period::preictal) d.labeling.labels[s] = Period::excluded;
    }
  }

  std::vector<double> onsets;
  for (const auto& m : d.seizures) onsets.push_back(m.onset_s);
  for (std::size_t r = 0; r < d.records.size(); ++r) {
    auto& rec = d.records[r];
    label_stamps(rec.timeline, d.labeling, static_cast<long long>(rec.offset_s));
    auto s = build_sequences(rec.timeline, sequence, r, rec.offset_s, onsets);
    d.samples.insert(d.samples.end(), s.begin(), s.end());
  }
  return d;
}

Tensor gather_batch(const PatientDataset& data, std::span<const std::size_t> sample_indices,
                    std::span<const std::size_t> channels) {
  const std::size_t c_all = data.channel_count(), f = data.feature_count();
  std::vector<std::size_t> chans(channels.begin(), channels.end());
  if (chans.empty())
    for (std::size_t c = 0; c < c_all; ++c) chans.push_back(c);
  for (auto c : chans)
    if (c >= c_all) throw DimensionError("channel " + std::to_string(c) + " out of range");
  const std::size_t t_len = data.sequence.seq_len, stride = data.sequence.stride;
  Tensor out({sample_indices.size() * chans.size() * t_len, f});
  double* dst = out.values().data();
  for (auto i : sample_indices) {
    const SequenceSample& s = data.samples.at(i);
    const FeatureTimeline& tl = data.records.at(s.record).timeline;
    for (auto c : chans) {
      for (std::size_t t = 0; t < t_len; ++t) {
        const auto row = tl.at(s.anchor + t * stride, c);
        dst = std::copy(row.begin(), row.end(), dst);
      }
    }
  }
  return out;
}

std::vector<double> gather_labels(const PatientDataset& data, std::span<const std::size_t> sample_indices) {
  std::vector<double> y;
  y.reserve(sample_indices.size());
  for (auto i : sample_indices) y.push_back(data.samples.at(i).label);
  return y;
}

void write_fold_manifest(const std::filesystem::path& path, const PatientDataset& data,
                         const std::vector<Fold>& folds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "record_id,anchor_s,label,fold,role\n";
  for (const auto& f : folds) {
    auto emit = [&](const std::vector<std::size_t>& idx, const char* role) {
      for (auto i : idx) {
        const auto& s = data.samples[i];
        out << data.records[s.record].id << ',' << s.anchor_time_s << ',' << (s.label ? "preictal" : "interictal")
            << ',' << f.index << ',' << role << '\n';
      }
    };
    emit(f.train, "train");
    emit(f.test, "test");
  }
}

}  // namespace seizset

#include "seizset/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "seizset/errors.hpp"

namespace seizset {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Report cells hold one line each.
std::string cell(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

fs::path fresh_run_dir(const ExperimentConfig& cfg) {
  if (!cfg.timestamped) return cfg.output_dir;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::path dir = cfg.output_dir / name.str();
  for (int n = 2; fs::exists(dir); ++n) dir = cfg.output_dir / (name.str() + "-" + std::to_string(n));
  return dir;
}

}  // namespace

void write_attention_csv(const fs::path& path, const PatientDataset& data, const SelectionOutcome& o) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17) << "channel,label,test_mean,mean,attention,selected\n";
  const auto& labels = data.records.front().timeline.channel_labels;
  for (std::size_t c = 0; c < o.attention.size(); ++c) {
    const bool sel = o.selection.ok() &&
                     std::find(o.selection.channels.begin(), o.selection.channels.end(), c) != o.selection.channels.end();
    out << c << ',' << (c < labels.size() ? labels[c] : "") << ',' << o.test_mean_attention[c] << ','
        << o.mean_attention[c] << ',' << o.attention[c] << ',' << (sel ? 1 : 0) << '\n';
  }
}

void write_fold_artifacts(const fs::path& dir, const std::string& tag, const ExperimentConfig& cfg,
                          const PatientDataset& data, const FoldOutcome& f) {
  const std::string stem = tag + "_fold" + std::to_string(f.fold);
  write_trace_csv(dir / (stem + ".trace.csv"), f.trace);
  write_trace_svg(dir / (stem + ".svg"), f.trace, f.alarms,
                  data.patient_id + " " + tag + " fold " + std::to_string(f.fold), cfg.threshold);
  Checkpoint ck;
  ck.params = f.model.params;
  ck.channels = f.model.channels;
  const auto& labels = data.records.front().timeline.channel_labels;
  for (auto c : ck.channels) ck.channel_labels.push_back(c < labels.size() ? labels[c] : "");
  ck.metadata["patient"] = data.patient_id;
  ck.metadata["fold"] = std::to_string(f.fold);
  ck.metadata["best_epoch"] = std::to_string(f.model.best_epoch);
  ck.metadata["seed"] = std::to_string(f.model.config.rng_seed);
  save_checkpoint(dir / (stem + ".ckpt"), ck);
}

std::vector<std::string> list_patients(const ExperimentConfig& cfg) {
  if (!cfg.patients.empty()) return cfg.patients;
  if (!fs::is_directory(cfg.data_dir)) throw IoError("data directory " + cfg.data_dir.string() + " does not exist");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(cfg.data_dir))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> list_records(const fs::path& patient_dir) {
  if (!fs::is_directory(patient_dir)) throw IoError("patient directory " + patient_dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(patient_dir)) {
    const std::string ext = lower(e.path().extension().string());
    if (e.is_regular_file() && (ext == ".edf" || ext == ".csv")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

IngestOptions ingest_options(const ExperimentConfig& cfg) {
  IngestOptions o;
  o.channels = cfg.channels;
  o.min_duration_s = static_cast<double>(cfg.sequence.duration_s());
  return o;
}

EegRecord read_record(const fs::path& path, const ExperimentConfig& cfg) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".csv") return read_csv_record(path, cfg.csv_sampling_rate, ingest_options(cfg));
  return read_edf(path, ingest_options(cfg));
}

std::vector<LoadedRecord> load_patient(const ExperimentConfig& cfg, const std::string& patient) {
  const auto paths = list_records(cfg.data_dir / patient);
  if (paths.empty()) throw IoError("patient " + patient + " has no .edf or .csv records");
  std::vector<LoadedRecord> out;
  for (const auto& p : paths) {
    LoadedRecord r;
    r.id = p.stem().string();
    r.record = read_record(p, cfg);
    fs::path sidecar = p;
    sidecar.replace_extension(".seizures");
    if (fs::exists(sidecar)) r.annotations = load_annotations(sidecar);
    r.annotations.patient_id = patient;
    out.push_back(std::move(r));
  }
  const bool all_timed = std::all_of(out.begin(), out.end(), [](const LoadedRecord& r) { return r.record.start_time > 0.0; });
  double earliest = 0.0;
  if (all_timed) {
    earliest = out.front().record.start_time;
    for (const auto& r : out) earliest = std::min(earliest, r.record.start_time);
  }
  double cursor = 0.0;
  for (auto& r : out) {
    if (r.annotations.record_start_s) r.offset_s = *r.annotations.record_start_s;
    else if (all_timed) r.offset_s = r.record.start_time - earliest;
    else r.offset_s = cursor;
    r.offset_s = std::round(r.offset_s);
    cursor = r.offset_s + std::ceil(r.record.duration_s());
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.offset_s < b.offset_s; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].offset_s < out[i - 1].offset_s + out[i - 1].record.duration_s())
      throw RecordError("records " + out[i - 1].id + " and " + out[i].id + " overlap in time");
  }
  return out;
}

PatientDataset prepare_patient(const ExperimentConfig& cfg, const std::string& patient) {
  auto loaded = load_patient(cfg, patient);
  std::vector<RecordTimeline> timelines;
  std::vector<Seizure> events;
  for (auto& r : loaded) {
    if (!timelines.empty() && r.record.channel_labels != timelines.front().timeline.channel_labels)
      throw RecordError("record " + r.id + " has a different channel set");
    timelines.push_back({r.id, r.offset_s, extract_timeline(r.record, cfg.features, cfg.threads)});
    for (const Seizure& s : r.annotations.events) events.push_back({s.onset_s + r.offset_s, s.end_s + r.offset_s});
    r.record = {};  // features only from here on
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  return assemble_patient(patient, std::move(timelines), events, cfg.labels, cfg.sequence);
}

ModelConfig resolved_model(const ExperimentConfig& cfg) {
  ModelConfig m = cfg.model;
  m.seq_len = cfg.sequence.seq_len;
  m.n_features = cfg.features.bands.size() * (cfg.features.bands.size() + 3) / 2;
  return m;
}

std::uint64_t fold_seed(std::uint64_t seed, const std::string& patient, int fold) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : patient) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix(seed ^ splitmix(h ^ static_cast<std::uint64_t>(fold)));
}

std::vector<double> fold_onsets(const PatientDataset& data, const Fold& fold) {
  return {data.seizures.at(static_cast<std::size_t>(fold.held_out_seizure)).onset_s};
}

FoldOutcome run_fold(const ExperimentConfig& cfg, const PatientDataset& data, const Fold& fold,
                     std::span<const std::size_t> channels, std::uint64_t seed, AttentionAccumulator* attention) {
  TrainConfig tc = cfg.train;
  tc.rng_seed = seed;
  return evaluate_fold(cfg, data, fold, fit(data, fold, tc, channels, resolved_model(cfg)), attention);
}

FoldOutcome evaluate_fold(const ExperimentConfig& cfg, const PatientDataset& data, const Fold& fold,
                          TrainedModel model, AttentionAccumulator* attention) {
  FoldOutcome f;
  f.fold = fold.index;
  f.trace = fold_trace(model, data, fold, cfg.threshold, attention);
  f.trace.onsets_s = fold_onsets(data, fold);
  f.alarms = alarms_from_trace(f.trace, cfg.persistence_for(data.patient_id), cfg.refractory_s);
  f.counts = score_trace(f.trace, f.alarms, f.trace.onsets_s, {cfg.labels.sph_s, cfg.labels.sop_s});
  f.model = std::move(model);
  return f;
}

SelectionOutcome choose_channels(const ExperimentConfig& cfg, const PatientDataset& data,
                                 const std::vector<Fold>& folds, const std::vector<const TrainedModel*>& models) {
  if (models.size() != folds.size()) throw DimensionError("one model per fold is required");
  const std::size_t n = data.channel_count();
  AttentionAccumulator test(n), train_int(n), train_pre(n);
  for (std::size_t k = 0; k < folds.size(); ++k) {
    if (models[k]->channels.size() != n) throw DimensionError("channel selection needs all-channel models");
    AttentionAccumulator a(n), b(n);
    accumulate_class_attention(*models[k], data, folds[k].test, a, b);
    test.merge(a);
    test.merge(b);
    if (cfg.selection_scope == SelectionScope::train_balanced)
      accumulate_class_attention(*models[k], data, folds[k].train, train_int, train_pre);
  }
  SelectionOutcome out;
  out.test_mean_attention = test.mean();
  out.mean_attention = cfg.selection_scope == SelectionScope::test ? out.test_mean_attention
                                                                   : class_balanced_mean(train_int, train_pre);
  out.attention = attention_softmax(out.mean_attention, cfg.temperature_for(n));
  out.selection = select_channels(out.attention, cfg.selection);
  return out;
}

PatientOutcome run_patient(const ExperimentConfig& cfg, const PatientDataset& data, const LogFn& log) {
  const auto say = [&](const std::string& s) {
    if (log) log(data.patient_id + ": " + s);
  };
  PatientOutcome o;
  o.result.patient = data.patient_id;
  o.result.seizures = data.seizures.size();
  o.folds = divide(data.samples, data.seizures.size(), cfg.division);

  for (const Fold& fold : o.folds) {
    o.all_channels.push_back(run_fold(cfg, data, fold, {}, fold_seed(cfg.seed, data.patient_id, fold.index)));
    const FoldOutcome& f = o.all_channels.back();
    o.result.all_channels += f.counts;
    say("fold " + std::to_string(fold.index) + " all channels: best epoch " + std::to_string(f.model.best_epoch) +
        ", tp=" + std::to_string(f.counts.tp) + " fn=" + std::to_string(f.counts.fn) +
        " fp=" + std::to_string(f.counts.fp));
  }

  std::vector<const TrainedModel*> models;
  for (const auto& f : o.all_channels) models.push_back(&f.model);
  SelectionOutcome choice = choose_channels(cfg, data, o.folds, models);
  o.test_mean_attention = std::move(choice.test_mean_attention);
  o.mean_attention = std::move(choice.mean_attention);
  o.attention = std::move(choice.attention);
  o.selection = std::move(choice.selection);
  o.result.selection_status = o.selection.ok() ? "selected" : "failed";
  o.result.selected_channels = o.selection.ok() ? format_channels(o.selection.channels) : "-";
  say("selection " + o.result.selection_status + " " + o.result.selected_channels);

  if (o.selection.ok() && cfg.retrain) {
    EvalCounts sel;
    for (const Fold& fold : o.folds) {
      const std::uint64_t seed = retrain_seed(fold_seed(cfg.seed, data.patient_id, fold.index));
      o.selected.push_back(run_fold(cfg, data, fold, o.selection.channels, seed));
      const FoldOutcome& f = o.selected.back();
      sel += f.counts;
      say("fold " + std::to_string(fold.index) + " selected: tp=" + std::to_string(f.counts.tp) +
          " fn=" + std::to_string(f.counts.fn) + " fp=" + std::to_string(f.counts.fp));
    }
    o.result.selected = sel;
  }
  return o;
}

std::vector<std::string> report_config_lines(const ExperimentConfig& cfg) {
  auto lines = cfg.lines();
  const ModelConfig m = resolved_model(cfg);
  lines.push_back("model.seq_len=" + std::to_string(m.seq_len));
  lines.push_back("model.n_features=" + std::to_string(m.n_features));
  lines.push_back("model.parameter_count=" + std::to_string(init_model(m, 0).parameter_count()));
  return lines;
}

namespace {

void write_patient_artifacts(const fs::path& run_dir, const fs::path& training_log, const ExperimentConfig& cfg,
                             const PatientDataset& data, const PatientOutcome& outcome) {
  const fs::path dir = run_dir / data.patient_id;
  fs::create_directories(dir);
  write_fold_manifest(dir / "folds.csv", data, outcome.folds);
  write_attention_csv(dir / "attention.csv", data,
                      {outcome.test_mean_attention, outcome.mean_attention, outcome.attention, outcome.selection});
  for (const auto& f : outcome.all_channels) {
    write_fold_artifacts(dir, "all", cfg, data, f);
    append_training_log(training_log, data.patient_id + "/all/fold" + std::to_string(f.fold), f.model);
  }
  for (const auto& f : outcome.selected) {
    write_fold_artifacts(dir, "selected", cfg, data, f);
    append_training_log(training_log, data.patient_id + "/selected/fold" + std::to_string(f.fold), f.model);
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  ExperimentResult res;
  res.run_dir = fresh_run_dir(cfg);
  fs::create_directories(res.run_dir);
  save_config(res.run_dir / "config.cfg", cfg);

  std::ofstream run_log(res.run_dir / "run.log");
  const LogFn say = [&](const std::string& s) {
    run_log << s << '\n';
    run_log.flush();
    if (log) log(s);
  };
  const fs::path training_log = res.run_dir / "training.log";
  if (cfg.write_artifacts) fs::remove(training_log);

  // Patients run on a bounded pool of workers. Each worker buffers its log
  // lines; logs, artifacts and report rows are emitted in patient order.
  struct Job {
    std::string patient;
    std::optional<PatientDataset> data;
    PatientOutcome outcome;
    std::string error;
    std::vector<std::string> lines;
  };
  std::vector<Job> jobs;
  for (const std::string& patient : list_patients(cfg)) jobs.push_back({patient, {}, {}, {}, {}});
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(jobs.size())));
  ExperimentConfig inner = cfg;
  inner.threads = std::max(1u, cfg.threads / workers);

  auto work = [&](Job& job, const LogFn& sink) {
    const LogFn buffer = sink ? sink : LogFn([&job](const std::string& s) { job.lines.push_back(s); });
    try {
      job.data = prepare_patient(inner, job.patient);
      buffer(job.patient + ": " + std::to_string(job.data->samples.size()) + " samples, " +
             std::to_string(job.data->seizures.size()) + " evaluable seizures");
      job.outcome = run_patient(inner, *job.data, buffer);
    } catch (const std::exception& e) {
      job.error = e.what();
    }
  };
  if (workers == 1) {
    // A single worker logs as it goes.
    for (Job& job : jobs) work(job, say);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) work(jobs[i], {});
      });
    for (auto& t : pool) t.join();
  }

  for (Job& job : jobs) {
    for (const auto& line : job.lines) say(line);
    PatientResult r;
    if (job.error.empty()) {
      try {
        r = job.outcome.result;
        if (cfg.write_artifacts) write_patient_artifacts(res.run_dir, training_log, cfg, *job.data, job.outcome);
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
    if (!job.error.empty()) {
      r = PatientResult{};
      r.patient = job.patient;
      r.status = cell(job.error);
      job.outcome = PatientOutcome{};
      say(job.patient + ": skipped: " + job.error);
    }
    res.patients.push_back(r);
    res.outcomes.push_back(std::move(job.outcome));
  }
  write_report_csv(res.run_dir / "report.csv", res.patients, report_config_lines(cfg));
  say("report written to " + (res.run_dir / "report.csv").string());
  return res;
}

ExperimentConfig config_from_report(const fs::path& report) {
  std::ifstream in(report);
  if (!in) throw IoError("cannot open report " + report.string());
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
    ++lineno;
    const std::string kv = line.substr(2);
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq);
    // Derived lines are recomputed, not configured.
    if (key == "model.seq_len" || key == "model.n_features" || key == "model.parameter_count") continue;
    try {
      cfg.set(key, kv.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(report.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (lineno == 0) throw ConfigError(report.string() + " holds no configuration lines");
  return cfg;
}

// ---------------------------------------------------------------------------
// Synthetic cohort

ExperimentConfig cohort_config(const CohortSpec& spec, const fs::path& data_dir) {
  ExperimentConfig cfg;
  const double k = spec.time_scale;
  cfg.data_dir = data_dir;
  cfg.channels.clear();
  cfg.csv_sampling_rate = spec.sampling_rate;
  cfg.labels.sph_s *= k;
  cfg.labels.sop_s *= k;
  cfg.labels.exclusion_s *= k;
  cfg.labels.merge_gap_s *= k;
  cfg.persistence_s *= k;
  cfg.refractory_s *= k;
  cfg.seed = spec.seed;
  return cfg;
}

SynthOutput synth_patient(const CohortSpec& spec, std::size_t patient) {
  std::mt19937_64 rng(splitmix(spec.seed * 1000003ULL + patient));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  SynthSpec s;
  s.n_channels = spec.channels;
  s.sampling_rate = spec.sampling_rate;
  s.informative_channels = spec.informative;
  s.preictal_band = spec.band;
  s.preictal_gain = spec.preictal_gain;
  s.seizure_duration_s = spec.seizure_duration_s;
  s.preictal_s = 1800.0 * spec.time_scale;
  s.horizon_s = 180.0 * spec.time_scale;
  s.rng_seed = rng();
  for (std::size_t i = 0; i < spec.seizures; ++i)
    s.seizure_times.push_back(std::round(spec.spacing_s * (static_cast<double>(i) + 0.75 + jitter(rng))));
  s.duration_s = (s.seizure_times.empty() ? 0.0 : s.seizure_times.back()) + 0.5 * spec.spacing_s;
  SynthOutput out = synth_generate(s);
  out.annotations.patient_id = "synth" + std::string(patient + 1 < 10 ? "0" : "") + std::to_string(patient + 1);
  return out;
}

ExperimentConfig write_synthetic_cohort(const fs::path& dir, const CohortSpec& spec) {
  fs::create_directories(dir);
  for (std::size_t p = 0; p < spec.patients; ++p) {
    SynthOutput s = synth_patient(spec, p);
    const std::string id = s.annotations.patient_id;
    fs::create_directories(dir / id);
    write_edf_file(dir / id / (id + "_01.edf"), edf_from_record(s.record));
    save_annotations(dir / id / (id + "_01.seizures"), s.annotations);
  }
  ExperimentConfig cfg = cohort_config(spec, dir);
  save_config(dir / "experiment.cfg", cfg);
  return cfg;
}

}  // namespace seizset

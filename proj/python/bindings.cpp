#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "seizset/errors.hpp"
#include "seizset/pipeline.hpp"

namespace py = pybind11;
using namespace seizset;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

EegRecord record_from_array(const Array& samples, int sampling_rate, std::vector<std::string> labels) {
  if (samples.ndim() != 2) throw DimensionError("samples must be 2-D (channels x samples)");
  EegRecord r;
  r.sampling_rate = sampling_rate;
  const auto c = static_cast<std::size_t>(samples.shape(0)), n = static_cast<std::size_t>(samples.shape(1));
  const double* p = samples.data();
  r.samples.assign(c, std::vector<double>(n));
  for (std::size_t i = 0; i < c; ++i) std::copy(p + i * n, p + (i + 1) * n, r.samples[i].begin());
  if (labels.empty())
    for (std::size_t i = 0; i < c; ++i) labels.push_back("CH" + std::to_string(i));
  r.channel_labels = std::move(labels);
  r.validate();
  return r;
}

Array to_array(const std::vector<std::vector<double>>& rows) {
  const std::size_t c = rows.size(), n = rows.empty() ? 0 : rows.front().size();
  Array out({c, n});
  double* p = out.mutable_data();
  for (std::size_t i = 0; i < c; ++i) std::copy(rows[i].begin(), rows[i].end(), p + i * n);
  return out;
}

Period period_of(const std::string& s) { return period_from_string(s); }

/// Model restored from a checkpoint, predicting on (C*T) x F samples.
class Predictor {
 public:
  explicit Predictor(const std::filesystem::path& path) : ck_(load_checkpoint(path)) {}

  py::tuple predict(const Array& sample) const {
    if (sample.ndim() != 2) throw DimensionError("sample must be 2-D ((channels*time) x features)");
    Tensor x({static_cast<std::size_t>(sample.shape(0)), static_cast<std::size_t>(sample.shape(1))});
    std::copy(sample.data(), sample.data() + sample.size(), x.values().begin());
    const std::size_t c = ck_.channels.empty() ? x.rows() / ck_.params.config.seq_len : ck_.channels.size();
    if (x.rows() != c * ck_.params.config.seq_len)
      throw DimensionError("sample rows do not match the checkpoint's channels and sequence length");
    const Prediction p = seizset::predict(x, c, ck_.params);
    return py::make_tuple(p.probability, p.attention);
  }

  std::vector<std::size_t> channels() const { return ck_.channels; }
  std::size_t parameter_count() const { return ck_.params.parameter_count(); }
  std::map<std::string, std::string> metadata() const { return ck_.metadata; }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seizure prediction with a channel-aware set transformer";

  static py::exception<Error> base(m, "SeizsetError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, (std::string(e.kind()) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "parameter_count",
      [](std::size_t seq_len, std::size_t n_features) {
        ModelConfig c;
        c.seq_len = seq_len;
        c.n_features = n_features;
        return init_model(c, 0).parameter_count();
      },
      py::arg("seq_len") = 19, py::arg("n_features") = 44, "Trainable parameters of the default network.");

  m.def(
      "extract_features",
      [](const Array& samples, int sampling_rate) {
        const FeatureTimeline tl = extract_timeline(record_from_array(samples, sampling_rate, {}));
        Array out({tl.n_times, tl.n_channels, tl.n_features});
        std::copy(tl.features.begin(), tl.features.end(), out.mutable_data());
        return out;
      },
      py::arg("samples"), py::arg("sampling_rate") = 256,
      "Band-power features of a channels x samples array, shaped (time, channel, feature).");

  m.def(
      "synth",
      [](std::size_t n_channels, double duration_s, std::vector<double> seizure_times,
         std::vector<std::size_t> informative, double gain, std::uint64_t seed, int sampling_rate) {
        SynthSpec s;
        s.n_channels = n_channels;
        s.duration_s = duration_s;
        s.seizure_times = std::move(seizure_times);
        s.informative_channels = std::move(informative);
        s.preictal_gain = gain;
        s.rng_seed = seed;
        s.sampling_rate = sampling_rate;
        const SynthOutput out = synth_generate(s);
        std::vector<std::pair<double, double>> events;
        for (const auto& e : out.annotations.events) events.emplace_back(e.onset_s, e.end_s);
        return py::make_tuple(to_array(out.record.samples), out.record.channel_labels, events);
      },
      py::arg("n_channels") = 8, py::arg("duration_s") = 600.0, py::arg("seizure_times") = std::vector<double>{},
      py::arg("informative") = std::vector<std::size_t>{}, py::arg("gain") = 4.0, py::arg("seed") = 1,
      py::arg("sampling_rate") = 256, "Synthetic EEG: (samples, labels, [(onset, end), ...]).");

  m.def(
      "alarms",
      [](std::vector<double> t, std::vector<bool> positive, double persistence_s, double refractory_s) {
        if (t.size() != positive.size()) throw DimensionError("t and positive differ in length");
        ProbabilityTrace tr;
        for (std::size_t i = 0; i < t.size(); ++i)
          tr.push(t[i], positive[i] ? 1.0 : 0.0, positive[i], Period::interictal);
        tr.validate();
        std::vector<std::pair<double, double>> out;
        for (const Alarm& a : alarms_from_trace(tr, persistence_s, refractory_s))
          out.emplace_back(a.trigger_time_s, a.run_start_s);
        return out;
      },
      py::arg("t"), py::arg("positive"), py::arg("persistence_s") = 240.0, py::arg("refractory_s") = 1800.0,
      "Alarm (trigger, run start) pairs of a per-second positive track.");

  m.def(
      "score",
      [](std::vector<double> alarm_times, std::vector<std::string> alarm_labels, std::vector<double> onsets,
         double interictal_seconds, double sph_s, double sop_s) {
        if (alarm_times.size() != alarm_labels.size()) throw DimensionError("one label per alarm is required");
        std::vector<Alarm> alarms;
        std::vector<Period> labels;
        for (std::size_t i = 0; i < alarm_times.size(); ++i) {
          alarms.push_back({alarm_times[i], alarm_times[i]});
          labels.push_back(period_of(alarm_labels[i]));
        }
        const EvalCounts c = score_events(alarms, labels, onsets, interictal_seconds, {sph_s, sop_s});
        py::dict d;
        d["tp"] = c.tp;
        d["fn"] = c.fn;
        d["fp"] = c.fp;
        d["interictal_hours"] = c.interictal_hours;
        d["sensitivity"] = sensitivity(c);
        d["fpr"] = fpr(c);
        return d;
      },
      py::arg("alarm_times"), py::arg("alarm_labels"), py::arg("onsets"), py::arg("interictal_seconds"),
      py::arg("sph_s") = 180.0, py::arg("sop_s") = 1800.0, "Event-based counts and metrics.");

  m.def(
      "select_channels",
      [](std::vector<double> attention, double dominance, double fail, std::size_t max_channels) {
        const ChannelSelection s = seizset::select_channels(attention, {dominance, fail, max_channels});
        return py::make_tuple(s.ok(), s.channels);
      },
      py::arg("attention"), py::arg("dominance_factor") = 1.5, py::arg("fail_factor") = 1.2,
      py::arg("max_channels") = 5, "(selected?, channels) for a finalized attention row.");

  m.def(
      "read_trace",
      [](const std::filesystem::path& path) {
        const ProbabilityTrace t = read_trace_csv(path);
        py::dict d;
        d["t_s"] = py::array(py::cast(t.t_s));
        d["probability"] = py::array(py::cast(t.probability));
        std::vector<bool> pos(t.positive.begin(), t.positive.end());
        d["positive"] = py::array(py::cast(pos));
        std::vector<std::string> labels;
        for (Period p : t.label) labels.emplace_back(to_string(p));
        d["label"] = labels;
        d["onsets_s"] = t.onsets_s;
        return d;
      },
      py::arg("path"), "Columns of a trace CSV.");

  m.def(
      "plot_trace",
      [](const std::filesystem::path& trace, const std::filesystem::path& svg, const std::string& title,
         double persistence_s, double refractory_s, double threshold) {
        const ProbabilityTrace t = read_trace_csv(trace);
        const auto alarms = alarms_from_trace(t, persistence_s, refractory_s);
        write_trace_svg(svg, t, alarms, title, threshold);
        return alarms.size();
      },
      py::arg("trace"), py::arg("svg"), py::arg("title") = "", py::arg("persistence_s") = 240.0,
      py::arg("refractory_s") = 1800.0, py::arg("threshold") = 0.5, "Writes an SVG; returns the alarm count.");

  m.def(
      "config_lines",
      [](const std::optional<std::filesystem::path>& path, const std::map<std::string, std::string>& overrides) {
        ExperimentConfig cfg = path ? load_config(*path) : ExperimentConfig{};
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        cfg.validate();
        return report_config_lines(cfg);
      },
      py::arg("path") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{},
      "Resolved configuration as key=value lines.");

  m.def(
      "write_synthetic_cohort",
      [](const std::filesystem::path& dir, std::size_t patients, std::size_t seizures, double gain, double spacing_s,
         std::uint64_t seed) {
        CohortSpec s;
        s.patients = patients;
        s.seizures = seizures;
        s.preictal_gain = gain;
        s.spacing_s = spacing_s;
        s.seed = seed;
        write_synthetic_cohort(dir, s);
        return dir / "experiment.cfg";
      },
      py::arg("dir"), py::arg("patients") = 3, py::arg("seizures") = 4, py::arg("gain") = 4.0,
      py::arg("spacing_s") = 2400.0, py::arg("seed") = 1, "Writes a cohort; returns its config path.");

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, const std::map<std::string, std::string>& overrides) {
        ExperimentConfig cfg = load_config(config);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        py::gil_scoped_release release;
        return run_experiment(cfg).run_dir;
      },
      py::arg("config"), py::arg("overrides") = std::map<std::string, std::string>{},
      "Runs every patient; returns the run directory.");

  py::class_<Predictor>(m, "Predictor", "Model restored from a checkpoint file.")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("predict", &Predictor::predict, py::arg("sample"), "(probability, channel attention) of one sample.")
      .def_property_readonly("channels", &Predictor::channels)
      .def_property_readonly("parameter_count", &Predictor::parameter_count)
      .def_property_readonly("metadata", &Predictor::metadata);
}

// seizset command-line tool: synth, features, train, select, eval, run, plot.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "seizset/errors.hpp"
#include "seizset/pipeline.hpp"

namespace fs = std::filesystem;
using namespace seizset;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Config file (key=value lines)")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one key, KEY=VALUE; repeatable")->allow_extra_args(false)->take_all();
  }

  ExperimentConfig resolve(ExperimentConfig base = {}) const {
    ExperimentConfig cfg = file.empty() ? std::move(base) : load_config(file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }
};

std::vector<std::size_t> parse_channels(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(text.data() + pos, text.data() + comma, v);
    if (ec != std::errc{} || p != text.data() + comma) throw ConfigError("bad channel list '" + text + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw ConfigError("duplicate channel in '" + text + "'");
  return out;
}

const Fold& find_fold(const std::vector<Fold>& folds, int index) {
  for (const Fold& f : folds)
    if (f.index == index) return f;
  throw ConfigError("fold " + std::to_string(index) + " does not exist (patient has " + std::to_string(folds.size()) +
                    " folds)");
}

void print_counts(const std::string& prefix, const EvalCounts& c) {
  const auto sen = sensitivity(c);
  const auto rate = fpr(c);
  std::cout << prefix << "tp=" << c.tp << " fn=" << c.fn << " fp=" << c.fp << " interictal_hours=" << c.interictal_hours
            << " sensitivity_pct=" << (sen ? std::to_string(*sen) : "N/A")
            << " fpr_per_h=" << (rate ? std::to_string(*rate) : "N/A") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seizure prediction with a channel-aware set transformer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "seizset 0.1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic cohort with planted preictal channels");
  CohortSpec spec;
  std::string synth_out;
  std::vector<std::size_t> informative;
  synth->add_option("--out", synth_out, "Cohort directory")->required();
  synth->add_option("--patients", spec.patients, "Pseudo-patients")->capture_default_str();
  synth->add_option("--channels", spec.channels, "Channels per patient")->capture_default_str();
  synth->add_option("--informative", informative, "Planted channel indices, comma separated")->delimiter(',');
  synth->add_option("--seizures", spec.seizures, "Seizures per patient")->capture_default_str();
  synth->add_option("--gain", spec.preictal_gain, "Preictal band-power gain")->capture_default_str();
  synth->add_option("--band", spec.band, "Planted band")->capture_default_str();
  synth->add_option("--time-scale", spec.time_scale, "Scale of every clinical time constant")->capture_default_str();
  synth->add_option("--spacing", spec.spacing_s, "Seconds between onsets")->capture_default_str();
  synth->add_option("--seizure-duration", spec.seizure_duration_s, "Seizure length in seconds")->capture_default_str();
  synth->add_option("--rate", spec.sampling_rate, "Sampling rate in Hz")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();

  // features
  auto* features = app.add_subcommand("features", "Compute the feature timeline of one record");
  ConfigArgs feat_cfg;
  std::string feat_record, feat_out;
  feat_cfg.attach(features);
  features->add_option("record", feat_record, ".edf or .csv record")->required()->check(CLI::ExistingFile);
  features->add_option("--out", feat_out, "Feature cache CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train and evaluate one fold");
  ConfigArgs train_cfg;
  std::string train_patient, train_channels, train_out = ".";
  int train_fold = 0;
  train_cfg.attach(train);
  train->add_option("--patient", train_patient, "Patient directory name")->required();
  train->add_option("--fold", train_fold, "Fold index")->required();
  train->add_option("--channels", train_channels, "Train on these channel indices (post-selection retrain)");
  train->add_option("--out", train_out, "Output directory")->capture_default_str();

  // select
  auto* select = app.add_subcommand("select", "Accumulate attention from fold checkpoints and select channels");
  ConfigArgs select_cfg;
  std::string select_patient, select_out;
  std::vector<std::string> select_ckpts;
  select_cfg.attach(select);
  select->add_option("--patient", select_patient, "Patient directory name")->required();
  select->add_option("checkpoints", select_ckpts, "All-channel checkpoint of every fold")
      ->required()
      ->check(CLI::ExistingFile);
  select->add_option("--out", select_out, "Attention CSV");

  // eval
  auto* eval = app.add_subcommand("eval", "Score probability traces into a report");
  ConfigArgs eval_cfg;
  std::string eval_patient = "patient", eval_out = "report.csv", eval_channels = "-", eval_selection;
  std::vector<std::string> eval_traces, eval_selected;
  eval_cfg.attach(eval);
  eval->add_option("traces", eval_traces, "All-channel trace CSVs of one patient")->required()->check(CLI::ExistingFile);
  eval->add_option("--selected", eval_selected, "Post-selection trace CSVs")->check(CLI::ExistingFile);
  eval->add_option("--selected-channels", eval_channels, "Label for the selected channel set")->capture_default_str();
  eval->add_option("--selection", eval_selection, "Selection status: selected or failed")
      ->check(CLI::IsMember({"selected", "failed"}));
  eval->add_option("--patient", eval_patient, "Patient name in the report")->capture_default_str();
  eval->add_option("--out", eval_out, "Report CSV")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Full experiment over every patient");
  ConfigArgs run_cfg;
  std::string run_division, run_output, run_report;
  std::optional<std::uint64_t> run_seed;
  std::optional<unsigned> run_threads;
  run_cfg.attach(run);
  run->add_option("--division", run_division, "even or seizure-independent");
  run->add_option("--seed", run_seed, "Experiment seed");
  run->add_option("--output", run_output, "Output directory");
  run->add_option("--threads", run_threads, "Worker threads: patients in parallel, the rest for features");
  run->add_option("--from-report", run_report, "Rerun with the config embedded in a report")->check(CLI::ExistingFile);

  // plot
  auto* plot = app.add_subcommand("plot", "Render a trace CSV as SVG");
  ConfigArgs plot_cfg;
  std::string plot_trace, plot_out, plot_title, plot_patient;
  plot_cfg.attach(plot);
  plot->add_option("trace", plot_trace, "Trace CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "SVG path (default: trace path with .svg)");
  plot->add_option("--title", plot_title, "Plot title");
  plot->add_option("--patient", plot_patient, "Patient whose persistence override applies");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth) {
      if (!informative.empty()) spec.informative = informative;
      const ExperimentConfig cfg = write_synthetic_cohort(synth_out, spec);
      for (const auto& p : list_patients(cfg)) std::cout << (fs::path(synth_out) / p).string() << '\n';
      std::cout << "config " << (fs::path(synth_out) / "experiment.cfg").string() << '\n';
    } else if (*features) {
      const ExperimentConfig cfg = feat_cfg.resolve();
      cfg.validate();
      const EegRecord rec = read_record(feat_record, cfg);
      const FeatureTimeline tl = extract_timeline(rec, cfg.features, cfg.threads);
      write_feature_cache(feat_out, tl);
      std::cout << "stamps=" << tl.n_times << " channels=" << tl.n_channels << " features=" << tl.n_features << '\n';
    } else if (*train) {
      const ExperimentConfig cfg = train_cfg.resolve();
      cfg.validate();
      const PatientDataset data = prepare_patient(cfg, train_patient);
      const auto folds = divide(data.samples, data.seizures.size(), cfg.division);
      const Fold& fold = find_fold(folds, train_fold);
      const std::uint64_t base = fold_seed(cfg.seed, train_patient, train_fold);
      std::vector<std::size_t> chans;
      if (!train_channels.empty()) chans = parse_channels(train_channels);
      for (auto c : chans)
        if (c >= data.channel_count())
          throw ChannelError("channel " + std::to_string(c) + " out of range (" +
                             std::to_string(data.channel_count()) + " channels)");
      const FoldOutcome f = run_fold(cfg, data, fold, chans, chans.empty() ? base : retrain_seed(base));
      const std::string tag = chans.empty() ? "all" : "selected";
      fs::create_directories(train_out);
      write_fold_artifacts(train_out, tag, cfg, data, f);
      append_training_log(fs::path(train_out) / "training.log",
                          train_patient + "/" + tag + "/fold" + std::to_string(train_fold), f.model);
      std::cout << "checkpoint " << (fs::path(train_out) / (tag + "_fold" + std::to_string(f.fold) + ".ckpt")).string()
                << '\n';
      print_counts("fold=" + std::to_string(f.fold) + " best_epoch=" + std::to_string(f.model.best_epoch) + " ",
                   f.counts);
    } else if (*select) {
      const ExperimentConfig cfg = select_cfg.resolve();
      cfg.validate();
      const PatientDataset data = prepare_patient(cfg, select_patient);
      const auto folds = divide(data.samples, data.seizures.size(), cfg.division);
      std::vector<TrainedModel> models(folds.size());
      std::vector<bool> have(folds.size(), false);
      for (const auto& path : select_ckpts) {
        Checkpoint ck = load_checkpoint(path, resolved_model(cfg));
        const auto it = ck.metadata.find("fold");
        if (it == ck.metadata.end()) throw ValidationError(path + " carries no fold index");
        const Fold& fold = find_fold(folds, std::stoi(it->second));
        const auto k = static_cast<std::size_t>(&fold - folds.data());
        if (have[k]) throw ValidationError("two checkpoints for fold " + it->second);
        models[k].params = std::move(ck.params);
        models[k].channels = std::move(ck.channels);
        have[k] = true;
      }
      if (std::find(have.begin(), have.end(), false) != have.end())
        throw ValidationError("selection needs one checkpoint per fold (" + std::to_string(folds.size()) + ")");
      std::vector<const TrainedModel*> ptrs;
      for (const auto& m : models) ptrs.push_back(&m);
      const SelectionOutcome sel = choose_channels(cfg, data, folds, ptrs);
      if (!select_out.empty()) write_attention_csv(select_out, data, sel);
      std::cout << "selection=" << (sel.selection.ok() ? "selected" : "failed")
                << " channels=" << (sel.selection.ok() ? format_channels(sel.selection.channels) : "-") << '\n';
    } else if (*eval) {
      const ExperimentConfig cfg = eval_cfg.resolve();
      cfg.validate();
      const ScoringConfig sc{cfg.labels.sph_s, cfg.labels.sop_s};
      auto score = [&](const std::vector<std::string>& paths) {
        EvalCounts total;
        for (const auto& p : paths) {
          const ProbabilityTrace t = read_trace_csv(p);
          const auto alarms = alarms_from_trace(t, cfg.persistence_for(eval_patient), cfg.refractory_s);
          total += score_trace(t, alarms, t.onsets_s, sc);
        }
        return total;
      };
      PatientResult r;
      r.patient = eval_patient;
      r.all_channels = score(eval_traces);
      r.seizures = r.all_channels.tp + r.all_channels.fn;
      r.selection_status = !eval_selection.empty() ? eval_selection : eval_selected.empty() ? "-" : "selected";
      r.selected_channels = eval_selected.empty() ? "-" : eval_channels;
      if (!eval_selected.empty()) r.selected = score(eval_selected);
      write_report_csv(eval_out, {r}, report_config_lines(cfg));
      print_counts("all_channels ", r.all_channels);
      if (r.selected) print_counts("selected ", *r.selected);
      std::cout << "report " << eval_out << '\n';
    } else if (*run) {
      ExperimentConfig cfg = run_cfg.resolve(run_report.empty() ? ExperimentConfig{} : config_from_report(run_report));
      if (!run_division.empty()) cfg.set("division.kind", run_division);
      if (run_seed) cfg.seed = *run_seed;
      if (!run_output.empty()) cfg.output_dir = run_output;
      if (run_threads) cfg.threads = *run_threads;
      const ExperimentResult res = run_experiment(cfg, [](const std::string& l) { std::cerr << l << '\n'; });
      for (const auto& p : res.patients) {
        if (p.status != "ok") {
          std::cout << p.patient << " skipped: " << p.status << '\n';
          continue;
        }
        print_counts(p.patient + " all_channels ", p.all_channels);
        if (p.selected) print_counts(p.patient + " selected(" + p.selected_channels + ") ", *p.selected);
      }
      std::cout << "report " << (res.run_dir / "report.csv").string() << '\n';
    } else if (*plot) {
      const ExperimentConfig cfg = plot_cfg.resolve();
      cfg.validate();
      const ProbabilityTrace t = read_trace_csv(plot_trace);
      const auto alarms = alarms_from_trace(t, cfg.persistence_for(plot_patient), cfg.refractory_s);
      fs::path out = plot_out.empty() ? fs::path(plot_trace).replace_extension(".svg") : fs::path(plot_out);
      write_trace_svg(out, t, alarms, plot_title.empty() ? fs::path(plot_trace).filename().string() : plot_title,
                      cfg.threshold);
      std::cout << "svg " << out.string() << " alarms=" << alarms.size() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

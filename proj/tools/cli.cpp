#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtrack/dataset.hpp"
#include "gtrack/experiment.hpp"

namespace gtrack::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const DivergenceError*>(&e) != nullptr) return kExitDivergence;
  if (dynamic_cast<const FormatError*>(&e) != nullptr || dynamic_cast<const InputError*>(&e) != nullptr ||
      dynamic_cast<const AlignmentError*>(&e) != nullptr ||
      dynamic_cast<const fs::filesystem_error*>(&e) != nullptr) {
    return kExitData;
  }
  return kExitFailure;
}

namespace {

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

RunConfig resolve_config(const Common& c, const RunConfig& fallback = {}) {
  RunConfig config = c.config.empty() ? fallback : load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

fs::path default_data_root(const RunConfig& config, const std::string& explicit_root) {
  return io::data_root(explicit_root, config.data.root);
}

void print_report_line(std::ostream& os, const eval::SequenceReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << r.seq_id << ": frames " << r.frames.size() << "  d_nocs "
      << r.mean.d_nocs << "  d_chamf " << r.mean.d_chamf << " cm  d_corr " << r.mean.d_corr << " cm";
  for (const auto& [t, a] : r.accuracy) out << "  A_" << std::defaultfloat << t << std::fixed << " " << a;
  os << out.str() << '\n';
}

// --- generate -------------------------------------------------------------

struct GenerateArgs {
  Common common;
  std::string out;
  std::optional<int> instances;
  std::optional<int> frames;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.common);
  if (a.instances) config.data.instances = *a.instances;
  if (a.frames) config.data.frames = *a.frames;
  const fs::path root = default_data_root(config, a.out);
  const auto summary = write_corpus(config, root);
  out << "wrote dataset to " << root.string() << '\n';
  for (const char* split : {"train", "val", "test"}) {
    out << "  " << split << ": " << summary.sequences.at(split) << " sequences from " << summary.instances.at(split)
        << " instances\n";
  }
  return kExitOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string out;
  bool resume = false;
  bool overfit = false;
  std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.common);
  if (a.epochs) config.optim.epochs = *a.epochs;
  config.validate();
  fs::path data = default_data_root(config, a.data);
  if (a.data.empty() && fs::exists(data / "train")) data /= "train";
  auto sequences = load_sequences(data);
  if (a.overfit) sequences.resize(1);
  torch::manual_seed(config.seed);
  auto options = TrainOptions::from(config);
  options.checkpoint = a.out;
  GarmentNet net(config.model());
  Trainer trainer(net, options);
  if (a.resume && fs::exists(a.out)) {
    const auto info = read_checkpoint_info(a.out);
    const auto stored = nlohmann::ordered_json::parse(info.config_json);
    if (stored.at("net") != nlohmann::ordered_json::parse(serialize(config)).at("net")) {
      throw ConfigError("checkpoint architecture differs from the config");
    }
    trainer.resume(a.out);
    out << "resumed " << a.out << " at epoch " << trainer.epoch() << '\n';
  }
  out << "training on " << sequences.size() << " sequences for " << config.optim.epochs << " epochs\n";
  trainer.fit(sequences, [&](const EpochLog& l) {
    std::ostringstream line;
    line << "epoch " << l.epoch << '/' << config.optim.epochs << "  loss " << l.loss << "  nocs " << l.nocs
         << "  refined " << l.refined_nocs << "  mesh " << l.mesh << "  warp " << l.warp << "  (" << std::fixed
         << std::setprecision(1) << l.seconds << " s)";
    out << line.str() << std::endl;
  });
  if (config.optim.epochs == 0 || trainer.epoch() == 0) {
    save_checkpoint(a.out, trainer.net(), serialize(config), trainer.epoch(), &trainer.optimizer());
  }
  out << "checkpoint " << a.out << '\n';
  return kExitOk;
}

// --- track ----------------------------------------------------------------

struct TrackArgs {
  Common common;
  std::string checkpoint;
  std::string sequence;
  std::string out;
  std::string init;
  std::string pose;
};

int cmd_track(const TrackArgs& a, std::ostream& out) {
  auto [net, ckpt_config] = open_checkpoint(a.checkpoint);
  RunConfig config = resolve_config(a.common, ckpt_config);
  if (!a.init.empty()) config.track.init = a.init;
  config.validate();
  const auto seq = io::read_dataset(a.sequence);
  const auto kept = moving_frames(seq, config.track.static_threshold_m);
  auto filtered = remove_static_frames(seq, config.track.static_threshold_m);
  if (filtered.frames.size() < 2) {
    throw InputError("sequence " + seq.manifest.seq_id + " has no moving frames");
  }
  const auto pose = make_init_pose(seq, config, a.pose);
  auto tracked = track_sequence(filtered, net, pose, tracker_config(config, seq));
  write_predictions(tracked, config.track.init, a.out, kept);
  StageTimings mean;
  for (const auto& s : tracked.steps) {
    mean.encode_ms += s.timings.encode_ms;
    mean.fuse_ms += s.timings.fuse_ms;
    mean.refine_ms += s.timings.refine_ms;
    mean.warp_ms += s.timings.warp_ms;
  }
  const double n = static_cast<double>(tracked.steps.size());
  std::ostringstream line;
  line << std::fixed << std::setprecision(2) << "mean stage ms: encode " << mean.encode_ms / n << "  fuse "
       << mean.fuse_ms / n << "  refine " << mean.refine_ms / n << "  warp " << mean.warp_ms / n << "  total "
       << mean.total_ms() / n;
  out << "tracked " << tracked.steps.size() << " frames of " << seq.manifest.seq_id << " (init " << config.track.init
      << ")\n"
      << line.str() << "\npredictions in " << a.out << '\n';
  return kExitOk;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string predictions;
  std::string sequence;
  std::string checkpoint;
  std::string data;
  std::string sweep;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.predictions.empty()) {
    if (a.sequence.empty()) throw ConfigError("--predictions needs --sequence");
    RunConfig config = resolve_config(a.common);
    const auto preds = read_predictions(a.predictions);
    const auto seq = io::read_dataset(a.sequence);
    auto report = score_predictions(preds, seq, config);
    const fs::path path = a.out.empty() ? fs::path(a.predictions) / "report.json" : fs::path(a.out);
    eval::write_report(report, path);
    plot_report(report, path.parent_path() / path.stem());
    print_report_line(out, report);
    out << "report " << path.string() << '\n';
    return kExitOk;
  }
  if (a.checkpoint.empty()) throw ConfigError("eval needs --predictions or --checkpoint");
  auto [net, ckpt_config] = open_checkpoint(a.checkpoint);
  RunConfig config = resolve_config(a.common, ckpt_config);
  fs::path data = default_data_root(config, a.data);
  if (a.data.empty() && fs::exists(data / "test")) data /= "test";
  const auto sequences = load_sequences(data);
  const fs::path dir = a.out.empty() ? fs::path("eval_out") : fs::path(a.out);
  fs::create_directories(dir);
  if (a.sweep.empty()) {
    std::vector<eval::SequenceReport> reports;
    for (const auto& seq : sequences) {
      reports.push_back(evaluate(seq, net, make_init_pose(seq, config), config));
      eval::write_report(reports.back(), dir / (seq.manifest.seq_id + ".json"));
      plot_report(reports.back(), dir / seq.manifest.seq_id);
      print_report_line(out, reports.back());
    }
    auto pooled = eval::pool_reports(reports, config.track.thresholds_cm, "all");
    eval::write_report(pooled, dir / "summary.json");
    print_report_line(out, pooled);
    return kExitOk;
  }
  if (a.sweep != "noise" && a.sweep != "frame_drop" && a.sweep != "all") {
    throw ConfigError("unknown sweep '" + a.sweep + "' (noise, frame_drop or all)");
  }
  std::vector<SweepResult> sweeps;
  if (a.sweep != "frame_drop") sweeps.push_back(noise_sweep(sequences, net, config));
  if (a.sweep != "noise") sweeps.push_back(frame_drop_sweep(sequences, net, config));
  for (const auto& s : sweeps) {
    write_sweep(s, dir / ("sweep_" + s.axis + ".json"));
    plot_sweep(s, dir / ("sweep_" + s.axis));
    for (const auto& p : s.points) {
      out << s.axis << ' ' << p.label << ": ";
      print_report_line(out, p.pooled);
    }
  }
  out << "sweeps in " << dir.string() << '\n';
  return kExitOk;
}

// --- plot -----------------------------------------------------------------

struct PlotArgs {
  std::string report;
  std::string sweep;
  std::string out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.report.empty() == a.sweep.empty()) throw ConfigError("plot needs exactly one of --report and --sweep");
  std::vector<fs::path> written;
  if (!a.report.empty()) {
    const fs::path stem = a.out.empty() ? fs::path(a.report).replace_extension() : fs::path(a.out);
    written = plot_report(eval::read_report(a.report), stem);
  } else {
    const fs::path stem = a.out.empty() ? fs::path(a.sweep).replace_extension() : fs::path(a.out);
    written = plot_sweep(read_sweep(a.sweep), stem);
  }
  for (const auto& p : written) out << p.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gtrack: category-level garment pose tracking"};
  app.name("gtrack");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "render a synthetic dataset with train/val/test splits");
  add_common(generate, gen.common);
  generate->add_option("--out", gen.out, "dataset root (default: $GT_DATA_ROOT, then config data.root)");
  generate->add_option("--instances", gen.instances, "number of garment instances");
  generate->add_option("--frames", gen.frames, "frames per sequence");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train the network, checkpointing every epoch");
  add_common(train, tr.common);
  train->add_option("--data", tr.data, "directory of training sequences");
  train->add_option("--out", tr.out, "checkpoint path")->required();
  train->add_option("--epochs", tr.epochs, "total epoch count");
  train->add_flag("--resume", tr.resume, "continue from --out when it exists");
  train->add_flag("--overfit", tr.overfit, "train on the first sequence only");

  TrackArgs tk;
  auto* track = app.add_subcommand("track", "track one sequence and write per-frame predictions");
  add_common(track, tk.common);
  track->add_option("--checkpoint", tk.checkpoint, "trained checkpoint")->required();
  track->add_option("--sequence", tk.sequence, "sequence directory")->required();
  track->add_option("--out", tk.out, "prediction directory")->required();
  track->add_option("--init", tk.init, "ground_truth, perturbed or external_file");
  track->add_option("--pose", tk.pose, "first-frame pose directory for external_file");

  EvalArgs ev;
  auto* evaluate_cmd = app.add_subcommand("eval", "score predictions or run robustness sweeps");
  add_common(evaluate_cmd, ev.common);
  evaluate_cmd->add_option("--predictions", ev.predictions, "prediction directory from `track`");
  evaluate_cmd->add_option("--sequence", ev.sequence, "ground-truth sequence for --predictions");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint to track and score a split with");
  evaluate_cmd->add_option("--data", ev.data, "sequences to evaluate (default: <data root>/test)");
  evaluate_cmd->add_option("--sweep", ev.sweep, "noise, frame_drop or all");
  evaluate_cmd->add_option("--out", ev.out, "report path (predictions) or output directory");

  PlotArgs pl;
  Common plot_common;
  auto* plot = app.add_subcommand("plot", "draw SVG charts from a report or a sweep");
  add_common(plot, plot_common);
  plot->add_option("--report", pl.report, "report JSON");
  plot->add_option("--sweep", pl.sweep, "sweep JSON");
  plot->add_option("--out", pl.out, "output file stem");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 consumes from the back
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    torch::set_num_threads(1);
    if (generate->parsed()) return cmd_generate(gen, out);
    if (train->parsed()) return cmd_train(tr, out);
    if (track->parsed()) return cmd_track(tk, out);
    if (evaluate_cmd->parsed()) return cmd_eval(ev, out);
    if (plot->parsed()) return cmd_plot(pl, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const char* kind = code == kExitConfig       ? "config error"
                       : code == kExitData       ? "data error"
                       : code == kExitDivergence ? "training diverged"
                                                 : "error";
    err << "gtrack: " << kind << ": " << e.what() << '\n';
    return code;
  }
  return kExitFailure;
}

}  // namespace gtrack::cli

#include "gtrack/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gtrack/dataset.hpp"

namespace gtrack {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string frame_name(size_t t, const std::string& what) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu.", t);
  return buf + what + ".bin";
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string ratio_label(double ratio) {
  if (ratio >= 1.0) return "1";
  return "1/" + std::to_string(static_cast<int>(std::lround(1.0 / ratio)));
}

json metrics_json(const eval::FrameMetrics& m) {
  return {{"d_nocs", m.d_nocs}, {"d_chamf_cm", m.d_chamf}, {"d_corr_cm", m.d_corr}};
}

std::string threshold_key(double t) {
  std::ostringstream s;
  s << t;
  return s.str();
}

}  // namespace

std::map<std::string, std::vector<int>> split_instances(int instances, uint64_t seed) {
  std::vector<int> ids(static_cast<size_t>(std::max(instances, 0)));
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 77));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<int>(ids.size());
  int n_val = static_cast<int>(std::lround(0.1 * n));
  int n_test = static_cast<int>(std::lround(0.1 * n));
  // Small corpora still get held-out data once there are three instances.
  if (n >= 3) {
    n_val = std::max(n_val, 1);
    n_test = std::max(n_test, 1);
  }
  const int n_train = n - n_val - n_test;
  std::map<std::string, std::vector<int>> out{{"train", {}}, {"val", {}}, {"test", {}}};
  for (int i = 0; i < n; ++i) {
    const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    out[split].push_back(ids[static_cast<size_t>(i)]);
  }
  for (auto& [name, v] : out) std::sort(v.begin(), v.end());
  return out;
}

std::vector<SequenceDataset> generate_corpus(const RunConfig& config) {
  const auto& d = config.data;
  if (d.instances <= 0 || d.scripts.empty() || d.sequences_per_instance <= 0) {
    throw InputError("the data config requests no sequences");
  }
  const Category category = parse_category(d.category);
  GeneratorOptions options;
  options.cameras = d.cameras;
  options.points_per_frame = d.points_per_frame;
  options.raster_resolution = d.raster_resolution;
  const auto base = make_template(category, d.template_resolution);
  std::vector<SequenceDataset> out;
  for (int i = 0; i < d.instances; ++i) {
    const auto mesh = vary_instance(base, mix_seed(config.seed, static_cast<uint64_t>(i)));
    for (const auto& script_name : d.scripts) {
      const Script script = parse_script(script_name);
      for (int k = 0; k < d.sequences_per_instance; ++k) {
        const uint64_t seed = mix_seed(mix_seed(config.seed, 1000 + static_cast<uint64_t>(i)),
                                       static_cast<uint64_t>(script) * 1000 + static_cast<uint64_t>(k));
        auto seq = generate_sequence(mesh, category, script, d.frames, seed, options);
        std::ostringstream id;
        id << to_string(category) << "_i" << std::setw(3) << std::setfill('0') << i << '_' << script_name << '_'
           << k;
        seq.manifest.seq_id = id.str();
        seq.manifest.instance_id = i;
        out.push_back(std::move(seq));
      }
    }
  }
  return out;
}

CorpusSummary write_corpus(const RunConfig& config, const fs::path& out) {
  const auto splits = split_instances(config.data.instances, config.seed);
  std::map<int, std::string> split_of;
  for (const auto& [name, ids] : splits)
    for (int id : ids) split_of[id] = name;
  CorpusSummary summary;
  for (const auto& [name, ids] : splits) {
    summary.sequences[name] = 0;
    summary.instances[name] = static_cast<int>(ids.size());
  }
  for (const auto& seq : generate_corpus(config)) {
    const auto& split = split_of.at(seq.manifest.instance_id);
    io::write_dataset(seq, io::sequence_dir(out / split, seq));
    ++summary.sequences[split];
  }
  json j;
  for (const auto& [name, ids] : splits) j[name] = ids;
  write_json({{"instances", j}}, out / "splits.json");
  return summary;
}

std::vector<fs::path> find_sequences(const fs::path& root) {
  if (!fs::exists(root)) {
    throw InputError("no such data directory: " + root.string());
  }
  std::vector<fs::path> out;
  auto consider = [&](const fs::path& dir) {
    const auto manifest = dir / "manifest.json";
    if (!fs::is_regular_file(manifest)) return;
    const auto j = read_json(manifest);
    if (j.contains("seq_id") && j.contains("num_frames")) out.push_back(dir);
  };
  consider(root);
  if (out.empty()) {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_directory()) consider(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SequenceDataset> load_sequences(const fs::path& root) {
  std::vector<SequenceDataset> out;
  for (const auto& dir : find_sequences(root)) out.push_back(io::read_dataset(dir));
  if (out.empty()) {
    throw InputError("no sequences under " + root.string());
  }
  return out;
}

void write_predictions(const TrackedSequence& tracked, const std::string& init_source, const fs::path& dir,
                       const std::vector<size_t>& source_frames) {
  if (!source_frames.empty() && source_frames.size() != tracked.sequence.frames.size()) {
    throw AlignmentError("source frame list does not match the tracked sequence");
  }
  fs::create_directories(dir / "frames");
  const auto& seq = tracked.sequence;
  io::write_array(dir / "canonical_mesh.faces.bin", seq.canonical_mesh.faces);
  json timings = json::array();
  json indices = json::array();
  for (size_t k = 0; k < tracked.steps.size(); ++k) {
    const auto& r = tracked.steps[k];
    const size_t t = source_frames.empty() ? k + 1 : source_frames[k + 1];
    indices.push_back(t);
    io::write_array(dir / "frames" / frame_name(t, "points"), r.points);
    std::vector<float> rows(r.point_rows.begin(), r.point_rows.end());
    io::write_vector(dir / "frames" / frame_name(t, "rows"), rows);
    io::write_array(dir / "frames" / frame_name(t, "raw_nocs"), r.raw_nocs);
    io::write_array(dir / "frames" / frame_name(t, "nocs"), r.nocs);
    io::write_array(dir / "frames" / frame_name(t, "canonical"), r.canonical_mesh.vertices);
    io::write_array(dir / "frames" / frame_name(t, "task"), r.task_vertices);
    timings.push_back({{"frame", t},
                       {"encode_ms", r.timings.encode_ms},
                       {"fuse_ms", r.timings.fuse_ms},
                       {"refine_ms", r.timings.refine_ms},
                       {"warp_ms", r.timings.warp_ms},
                       {"total_ms", r.timings.total_ms()}});
  }
  json manifest;
  manifest["kind"] = "predictions";
  manifest["format_version"] = io::kFormatVersion;
  manifest["seq_id"] = seq.manifest.seq_id;
  manifest["init"] = init_source;
  manifest["num_frames"] = tracked.steps.size();
  manifest["frame_indices"] = indices;
  manifest["face_count"] = seq.canonical_mesh.faces.rows();
  write_json(manifest, dir / "manifest.json");
  write_json({{"frames", timings}}, dir / "timings.json");
}

Predictions read_predictions(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("kind", "") != "predictions") {
    throw FormatError(dir.string() + " does not hold tracker predictions");
  }
  if (manifest.value("format_version", 0U) != io::kFormatVersion) {
    throw VersionError("prediction format version mismatch in " + dir.string());
  }
  Predictions p;
  p.seq_id = manifest.at("seq_id").get<std::string>();
  p.init_source = manifest.at("init").get<std::string>();
  p.faces = io::read_faces(dir / "canonical_mesh.faces.bin");
  for (const auto& idx : manifest.at("frame_indices")) {
    const auto t = idx.get<size_t>();
    FramePrediction f;
    f.points = io::read_points(dir / "frames" / frame_name(t, "points"));
    for (float r : io::read_vector(dir / "frames" / frame_name(t, "rows"))) {
      f.point_rows.push_back(static_cast<int64_t>(r));
    }
    f.nocs = io::read_points(dir / "frames" / frame_name(t, "nocs"));
    f.canonical_vertices = io::read_points(dir / "frames" / frame_name(t, "canonical"));
    f.task_vertices = io::read_points(dir / "frames" / frame_name(t, "task"));
    if (f.points.rows() != f.nocs.rows() || static_cast<Eigen::Index>(f.point_rows.size()) != f.nocs.rows() ||
        f.canonical_vertices.rows() != f.task_vertices.rows()) {
      throw FormatError("prediction arrays of frame " + std::to_string(t) + " disagree in length");
    }
    p.frames.push_back(std::move(f));
    p.frame_indices.push_back(static_cast<int>(t));
  }
  return p;
}

eval::SequenceReport score_predictions(const Predictions& predictions, const SequenceDataset& sequence,
                                       const RunConfig& config) {
  if (predictions.seq_id != sequence.manifest.seq_id) {
    throw AlignmentError("predictions are for " + predictions.seq_id + ", sequence is " +
                         sequence.manifest.seq_id);
  }
  if (predictions.faces.rows() != sequence.canonical_mesh.faces.rows()) {
    throw AlignmentError("predicted mesh topology differs from the sequence mesh");
  }
  if (predictions.frame_indices.size() != predictions.frames.size()) {
    throw AlignmentError("prediction frame indices do not match the frame count");
  }
  std::vector<eval::FrameObservation> obs;
  for (size_t k = 0; k < predictions.frames.size(); ++k) {
    const auto t = static_cast<size_t>(predictions.frame_indices[k]);
    if (t >= sequence.frames.size()) {
      throw AlignmentError("prediction frame " + std::to_string(t) + " is beyond the sequence");
    }
    const auto& f = predictions.frames[k];
    if (f.point_rows.empty() ||
        *std::max_element(f.point_rows.begin(), f.point_rows.end()) >= sequence.frames[t].points.rows()) {
      throw AlignmentError("prediction rows of frame " + std::to_string(t) + " do not fit the sequence");
    }
    CanonicalMesh mesh;
    mesh.vertices = f.canonical_vertices;
    mesh.faces = predictions.faces;
    obs.push_back(observe_frame(f.nocs, f.point_rows, mesh, f.task_vertices, sequence.frames[t],
                                sequence.canonical_mesh, config.samples.mesh_points, mix_seed(config.seed, k)));
  }
  return eval::evaluate_sequence(obs, config.track.thresholds_cm, sequence.manifest.seq_id);
}

SweepResult noise_sweep(const std::vector<SequenceDataset>& sequences, GarmentNet& net, const RunConfig& config) {
  SweepResult out;
  out.axis = "noise";
  for (int level = 1; level <= 3; ++level) {
    RunConfig c = config;
    c.noise.level = std::to_string(level) + "x";
    c.track.init = "perturbed";
    std::vector<eval::SequenceReport> reports;
    for (const auto& seq : sequences) reports.push_back(evaluate(seq, net, make_init_pose(seq, c), c));
    out.points.push_back({c.noise.level, static_cast<double>(level),
                          eval::pool_reports(reports, c.track.thresholds_cm, "noise_" + c.noise.level)});
  }
  return out;
}

SweepResult frame_drop_sweep(const std::vector<SequenceDataset>& sequences, GarmentNet& net, const RunConfig& config,
                             const std::vector<double>& ratios) {
  SweepResult out;
  out.axis = "frame_drop";
  RunConfig c = config;
  c.track.init = "ground_truth";
  for (double ratio : ratios) {
    std::vector<eval::SequenceReport> reports;
    for (const auto& seq : sequences) {
      SequenceDataset kept;
      try {
        kept = subsample_frames(seq, ratio);
      } catch (const InputError& e) {
        throw InputError(seq.manifest.seq_id + " (" + std::to_string(seq.frames.size()) + " frames) at keep ratio " +
                         ratio_label(ratio) + ": " + e.what());
      }
      reports.push_back(evaluate(kept, net, make_init_pose(kept, c), c));
    }
    out.points.push_back(
        {ratio_label(ratio), ratio, eval::pool_reports(reports, c.track.thresholds_cm, "keep_" + ratio_label(ratio))});
  }
  return out;
}

void write_sweep(const SweepResult& sweep, const fs::path& path) {
  json points = json::array();
  for (const auto& p : sweep.points) {
    json acc = json::object();
    for (const auto& [t, a] : p.pooled.accuracy) acc[threshold_key(t)] = a;
    points.push_back({{"label", p.label},
                      {"value", p.value},
                      {"num_frames", p.pooled.frames.size()},
                      {"mean", metrics_json(p.pooled.mean)},
                      {"accuracy", acc}});
  }
  write_json({{"axis", sweep.axis}, {"points", points}}, path);
}

SweepResult read_sweep(const fs::path& path) {
  const auto j = read_json(path);
  try {
    SweepResult s;
    s.axis = j.at("axis").get<std::string>();
    for (const auto& p : j.at("points")) {
      SweepPoint sp;
      sp.label = p.at("label").get<std::string>();
      sp.value = p.at("value").get<double>();
      sp.pooled.seq_id = sp.label;
      sp.pooled.mean.d_nocs = p.at("mean").at("d_nocs").get<double>();
      sp.pooled.mean.d_chamf = p.at("mean").at("d_chamf_cm").get<double>();
      sp.pooled.mean.d_corr = p.at("mean").at("d_corr_cm").get<double>();
      for (const auto& [k, v] : p.at("accuracy").items()) sp.pooled.accuracy[std::stod(k)] = v.get<double>();
      s.points.push_back(std::move(sp));
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
  constexpr double kW = 640;
  constexpr double kH = 400;
  constexpr double kLeft = 70;
  constexpr double kRight = 150;
  constexpr double kTop = 40;
  constexpr double kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = 0.0;  // metrics are non-negative; anchor the axis at zero
  double y1 = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (double v : s.x) {
      x0 = std::min(x0, v);
      x1 = std::max(x1, v);
    }
    for (double v : s.y) {
      if (std::isfinite(v)) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (!std::isfinite(y1) || y1 <= y0) y1 = y0 + 1;
  y1 *= 1.05;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  auto sx = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto sy = [&](double v) { return kTop + ph - (v - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << std::setprecision(4);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  o << "<g stroke=\"#333\">\n<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
    << kTop + ph << "\"/>\n<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\"/>\n</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << sy(yv) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << sy(yv)
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  o << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
    << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) o << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    o << "\"/>\n";
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      o << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
  return stem.parent_path() / (stem.filename().string() + "_" + suffix + ".svg");
}

}  // namespace

std::vector<fs::path> plot_report(const eval::SequenceReport& report, const fs::path& stem) {
  struct Metric {
    const char* key;
    const char* label;
    double eval::FrameMetrics::*field;
  };
  const Metric metrics[] = {{"d_nocs", "D_nocs", &eval::FrameMetrics::d_nocs},
                            {"d_chamf", "D_chamf (cm)", &eval::FrameMetrics::d_chamf},
                            {"d_corr", "D_corr (cm)", &eval::FrameMetrics::d_corr}};
  std::vector<fs::path> written;
  for (const auto& m : metrics) {
    Series s{report.seq_id.empty() ? "sequence" : report.seq_id, {}, {}};
    for (size_t k = 0; k < report.frames.size(); ++k) {
      s.x.push_back(static_cast<double>(k + 1));
      s.y.push_back(report.frames[k].*(m.field));
    }
    const auto path = with_suffix(stem, m.key);
    write_text(path, line_plot_svg(std::string(m.label) + " per frame", "frame", m.label, {s}));
    written.push_back(path);
  }
  return written;
}

std::vector<fs::path> plot_sweep(const SweepResult& sweep, const fs::path& stem) {
  const bool noise = sweep.axis == "noise";
  const std::string x_label = noise ? "noise level (x)" : "kept frame ratio";
  std::vector<fs::path> written;
  auto emit = [&](const std::string& key, const std::string& label, const std::vector<Series>& series) {
    const auto path = with_suffix(stem, key);
    write_text(path, line_plot_svg(label + " vs " + (noise ? "noise" : "frame drop"), x_label, label, series));
    written.push_back(path);
  };
  Series d_nocs{"D_nocs", {}, {}};
  Series d_chamf{"D_chamf", {}, {}};
  Series d_corr{"D_corr", {}, {}};
  std::map<double, Series> acc;
  for (const auto& p : sweep.points) {
    for (auto* s : {&d_nocs, &d_chamf, &d_corr}) s->x.push_back(p.value);
    d_nocs.y.push_back(p.pooled.mean.d_nocs);
    d_chamf.y.push_back(p.pooled.mean.d_chamf);
    d_corr.y.push_back(p.pooled.mean.d_corr);
    for (const auto& [t, a] : p.pooled.accuracy) {
      auto& s = acc[t];
      s.name = "A_" + threshold_key(t) + "cm";
      s.x.push_back(p.value);
      s.y.push_back(a);
    }
  }
  emit("d_nocs", "D_nocs", {d_nocs});
  emit("d_chamf", "D_chamf (cm)", {d_chamf});
  emit("d_corr", "D_corr (cm)", {d_corr});
  std::vector<Series> acc_series;
  for (auto& [t, s] : acc) acc_series.push_back(std::move(s));
  emit("accuracy", "A_d", acc_series);
  return written;
}

}  // namespace gtrack

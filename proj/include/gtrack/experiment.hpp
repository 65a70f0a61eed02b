#pragma once

// Whole-run plumbing shared by the CLI and the acceptance suite: corpus
// generation with instance-level splits, prediction files, robustness sweeps
// and SVG plots.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gtrack/pipeline.hpp"

namespace gtrack {

/// Instance ids per split ("train", "val", "test"), 0.8 / 0.1 / 0.1 after a
/// seeded shuffle. Every instance lands in exactly one split.
std::map<std::string, std::vector<int>> split_instances(int instances, uint64_t seed);

/// Every sequence described by `config.data`, in instance-major order.
/// Throws InputError when the config asks for no sequences.
std::vector<SequenceDataset> generate_corpus(const RunConfig& config);

struct CorpusSummary {
  std::map<std::string, int> sequences;  // per split
  std::map<std::string, int> instances;  // per split
};

/// Generates the corpus and writes it as `<out>/<split>/<category>/<seq_id>`.
CorpusSummary write_corpus(const RunConfig& config, const std::filesystem::path& out);

/// All sequence directories below `root` (a directory holding manifest.json
/// with a seq_id), sorted by path.
std::vector<std::filesystem::path> find_sequences(const std::filesystem::path& root);
std::vector<SequenceDataset> load_sequences(const std::filesystem::path& root);

/// Writes per-frame tracker output in the dataset container conventions:
/// manifest.json, canonical_mesh.faces.bin, frames/<t>.{points,rows,raw_nocs,
/// nocs,canonical,task}.bin and timings.json. `source_frames` maps tracked
/// frames back to the original sequence (static frames removed); empty means
/// the identity.
void write_predictions(const TrackedSequence& tracked, const std::string& init_source,
                       const std::filesystem::path& dir, const std::vector<size_t>& source_frames = {});

struct FramePrediction {
  PointMatrix points;
  std::vector<int64_t> point_rows;
  PointMatrix nocs;
  PointMatrix canonical_vertices;
  PointMatrix task_vertices;
};

struct Predictions {
  std::string seq_id;
  std::string init_source;
  FaceMatrix faces;
  std::vector<FramePrediction> frames;  // frames[k] predicts tracked frame k + 1
  std::vector<int> frame_indices;       // index of each predicted frame in the original sequence
};

Predictions read_predictions(const std::filesystem::path& dir);

/// Scores stored predictions against the original sequence they were tracked on.
eval::SequenceReport score_predictions(const Predictions& predictions, const SequenceDataset& sequence,
                                       const RunConfig& config);

/// One point of a robustness curve: metrics pooled over all sequences.
struct SweepPoint {
  std::string label;
  double value = 0.0;  // noise multiplier or kept-frame ratio
  eval::SequenceReport pooled;
};

struct SweepResult {
  std::string axis;  // "noise" or "frame_drop"
  std::vector<SweepPoint> points;
};

/// Tracks every sequence from a first frame perturbed at 1x, 2x and 3x.
SweepResult noise_sweep(const std::vector<SequenceDataset>& sequences, GarmentNet& net, const RunConfig& config);

/// Tracks every sequence with frames kept at the given ratios (ground-truth init).
SweepResult frame_drop_sweep(const std::vector<SequenceDataset>& sequences, GarmentNet& net,
                             const RunConfig& config,
                             const std::vector<double>& ratios = {1.0, 0.5, 0.25, 1.0 / 6.0, 0.125});

void write_sweep(const SweepResult& sweep, const std::filesystem::path& path);
SweepResult read_sweep(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// A line chart as a standalone SVG document.
std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);

/// Metric-vs-frame charts of a report: one file per metric, named
/// `<stem>_<metric>.svg`. Returns the written paths.
std::vector<std::filesystem::path> plot_report(const eval::SequenceReport& report,
                                               const std::filesystem::path& stem);

/// Robustness curves of a sweep: one file per metric.
std::vector<std::filesystem::path> plot_sweep(const SweepResult& sweep, const std::filesystem::path& stem);

}  // namespace gtrack

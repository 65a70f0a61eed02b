#pragma once

// Training, checkpointing and end-to-end tracking/evaluation built from the
// library modules. The CLI commands are thin wrappers around these.

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "gtrack/config.hpp"
#include "gtrack/metrics.hpp"
#include "gtrack/model.hpp"
#include "gtrack/tracker.hpp"

namespace gtrack {

inline constexpr int64_t kCheckpointVersion = 1;

/// Derives an independent seed from a base seed and a stream index.
uint64_t mix_seed(uint64_t a, uint64_t b);

struct CheckpointInfo {
  std::string config_json;
  int64_t epoch = 0;
  int64_t format_version = 0;
};

/// Writes weights, the config snapshot, the epoch counter and (optionally)
/// the optimizer state. The file is replaced atomically.
void save_checkpoint(const std::filesystem::path& path, GarmentNet& net, const std::string& config_json,
                     int64_t epoch, torch::optim::Optimizer* optimizer = nullptr);
/// Throws FormatError for unreadable files and VersionError for other versions.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
void load_checkpoint(const std::filesystem::path& path, GarmentNet& net,
                     torch::optim::Optimizer* optimizer = nullptr);

/// Builds the network described by a checkpoint and loads its weights.
std::pair<GarmentNet, RunConfig> open_checkpoint(const std::filesystem::path& path);

/// One training example: frames t-1 and t of a sequence, resampled and
/// augmented. All tensors are [rows, 3] float.
struct PairSample {
  torch::Tensor prev_xyz;
  torch::Tensor prev_nocs;  // noisy ground truth (teacher forcing)
  torch::Tensor curr_xyz;
  torch::Tensor curr_nocs;  // ground truth
  torch::Tensor mesh_in;    // perturbed canonical surface samples
  torch::Tensor mesh_gt;    // the same samples on the clean canonical mesh
  torch::Tensor warp_gt;    // their task-space positions at frame t
};

struct TrainOptions {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 30;
  double grad_clip = 0.0;
  int lr_decay_epoch = 0;  // epochs from this one on use learning_rate * lr_decay_factor
  double lr_decay_factor = 0.1;
  int pc_points = 4000;
  int mesh_points = 6000;
  nocs::NoiseParams noise = nocs::NoiseParams::for_level(nocs::NoiseLevel::k1x);
  double train_delta = 0.0;
  bool augment_mesh_offset = true;
  bool scatter_with_gt_nocs = true;
  LossWeights weights;
  uint64_t seed = 0;
  std::filesystem::path checkpoint;  // empty: do not save
  std::string config_json;           // stored in checkpoints

  static TrainOptions from(const RunConfig& config);
};

PairSample make_pair_sample(const SequenceDataset& seq, size_t t, const TrainOptions& options,
                            uint64_t seed);

struct EpochLog {
  int epoch = 0;  // 1-based count of completed epochs
  double loss = 0.0;
  double nocs = 0.0;
  double refined_nocs = 0.0;
  double mesh = 0.0;
  double warp = 0.0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(GarmentNet net, TrainOptions options);

  /// Loads weights, optimizer state and the epoch counter from a checkpoint.
  void resume(const std::filesystem::path& path);

  /// Trains until `options.epochs` epochs have completed in total. Throws
  /// DivergenceError on a non-finite loss.
  std::vector<EpochLog> fit(const std::vector<SequenceDataset>& sequences,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  /// One optimizer step on a batch; returns the loss terms (detached).
  LossTerms train_step(const std::vector<PairSample>& batch);

  [[nodiscard]] int epoch() const { return epoch_; }
  GarmentNet& net() { return net_; }
  torch::optim::Adam& optimizer() { return optimizer_; }

 private:
  GarmentNet net_;
  TrainOptions options_;
  torch::optim::Adam optimizer_;
  int epoch_ = 0;
};

struct TrackedSequence {
  SequenceDataset sequence;       // frames actually tracked (frame 0 is the init frame)
  std::vector<StepResult> steps;  // steps[k] is frame k + 1
};

TrackedSequence track_sequence(const SequenceDataset& seq, GarmentNet& net, const InitPose& pose,
                               const TrackerConfig& config);

/// Metric inputs for one tracked frame: predicted point labels plus predicted
/// and ground-truth surfaces sampled with `surface_points` points each.
eval::FrameObservation observe_frame(const PointMatrix& pred_nocs, const std::vector<int64_t>& point_rows,
                                     const CanonicalMesh& pred_canonical, const PointMatrix& pred_task_vertices,
                                     const PointCloudFrame& frame, const CanonicalMesh& gt_mesh,
                                     int surface_points, uint64_t seed);

/// Metric inputs for every tracked frame. Surfaces are compared through
/// `surface_points` area-weighted samples.
std::vector<eval::FrameObservation> observe(const TrackedSequence& tracked, int surface_points,
                                            uint64_t seed);

/// Tracks and scores one sequence. Static frames are removed first.
eval::SequenceReport evaluate(const SequenceDataset& seq, GarmentNet& net, const InitPose& pose,
                              const RunConfig& config);

/// Tracker settings implied by a run config for a given sequence.
TrackerConfig tracker_config(const RunConfig& config, const SequenceDataset& seq);

/// Builds the first-frame pose named by `config.track.init`. External poses are
/// read from `external_dir`.
InitPose make_init_pose(const SequenceDataset& seq, const RunConfig& config,
                        const std::filesystem::path& external_dir = {});

}  // namespace gtrack

#pragma once

// Online tracking loop. The tracker owns no weights: it threads a
// TrackerState through GarmentNet one frame at a time, feeding each frame's
// refined NOCS prediction forward as the next frame's positional input.

#include <filesystem>
#include <optional>

#include "gtrack/model.hpp"
#include "gtrack/nocs.hpp"
#include "gtrack/synth.hpp"

namespace gtrack {

struct TrackerConfig {
  int pc_points = 4000;
  int mesh_points = 6000;
  int mesh_refine_budget = 15;    // frames during which the mesh refiner may edit the mesh
  uint64_t seed = 0;              // per-sequence resampling seed
};

/// Mesh refiner budget for a script family: 1 for folding, 15 otherwise.
int default_refine_budget(Script script);

enum class InitSource { kGroundTruth, kPerturbed, kExternalFile };

std::string to_string(InitSource s);
InitSource parse_init_source(const std::string& text);

/// First-frame pose. `nocs` is aligned with `points`, the cloud the pose was
/// estimated on (normally the first frame's points).
struct InitPose {
  InitSource source = InitSource::kGroundTruth;
  PointMatrix points;
  PointMatrix nocs;
  CanonicalMesh mesh;
};

InitPose ground_truth_pose(const SequenceDataset& seq);

/// Ground-truth pose corrupted with perturb_nocs / perturb_mesh at `params`.
InitPose perturbed_pose(const SequenceDataset& seq, const nocs::NoiseParams& params, uint64_t seed);

/// Exchange format: manifest.json plus points/nocs/mesh_verts/mesh_faces .bin
/// arrays in the dataset container.
void write_init_pose(const InitPose& pose, const std::filesystem::path& dir);
InitPose read_init_pose(const std::filesystem::path& dir);

struct TrackerState {
  PointMatrix prev_points;
  PointMatrix prev_nocs;
  CanonicalMesh canonical_mesh;
  int frame_index = 0;
  int mesh_refine_budget = 0;
};

/// Throws AlignmentError if the pose does not match the first frame.
TrackerState init(const PointCloudFrame& first_frame, const InitPose& pose, const TrackerConfig& config);

struct StepResult {
  PointMatrix points;                // resampled current points
  std::vector<int64_t> point_rows;   // their rows in the input frame
  PointMatrix raw_nocs;
  PointMatrix nocs;                  // refined, fed forward
  CanonicalMesh canonical_mesh;      // refined canonical mesh after this frame
  PointMatrix task_vertices;         // canonical_mesh vertices warped to task space
  std::array<double, 3> mesh_scale{1.0, 1.0, 1.0};
  std::array<double, 3> mesh_offset{0.0, 0.0, 0.0};
  StageTimings timings;
  TrackerState state;                // state for the next frame
};

/// Runs one frame. `net` is used in eval mode without gradients; the input
/// state is not modified.
StepResult step(const TrackerState& state, const PointCloudFrame& frame, GarmentNet& net,
                const TrackerConfig& config);

/// Keeps frames 0, s, 2s, ... with s = 1 / keep_ratio (must be an integer).
/// Throws InputError if fewer than 2 frames remain.
SequenceDataset subsample_frames(const SequenceDataset& seq, double keep_ratio);

/// Drops frames whose ground-truth mesh moved less than `threshold_m` (mean
/// vertex displacement) since the last kept frame. Frame 0 is always kept.
SequenceDataset remove_static_frames(const SequenceDataset& seq, double threshold_m);

/// Indices of the frames remove_static_frames keeps.
std::vector<size_t> moving_frames(const SequenceDataset& seq, double threshold_m);

}  // namespace gtrack

#pragma once

// Evaluation metrics for canonical-coordinate prediction and full-garment
// reconstruction, plus per-sequence report aggregation.

#include <filesystem>
#include <map>
#include <vector>

#include "gtrack/types.hpp"

namespace gtrack::eval {

/// Mean per-point Euclidean distance between aligned NOCS predictions.
double d_nocs(const PointMatrix& pred_nocs, const PointMatrix& gt_nocs);

/// Symmetric chamfer distance in centimeters: the average of the two mean
/// nearest-neighbor distances (inputs in meters).
double chamfer_cm(const PointMatrix& pred_points, const PointMatrix& gt_points);

/// Correspondence distance in centimeters. Each predicted point is matched to
/// the ground-truth point closest in NOCS; the task-space distances to the
/// matches are averaged. Direction is prediction -> ground truth.
double d_corr_cm(const PointMatrix& pred_points, const PointMatrix& pred_nocs,
                 const PointMatrix& gt_points, const PointMatrix& gt_nocs);

/// Fraction of values strictly below `threshold_cm`.
double accuracy_at(const std::vector<double>& per_frame_d_corr, double threshold_cm);

// O(N^2) references used by the tests and the acceptance suite.
double chamfer_cm_brute_force(const PointMatrix& pred_points, const PointMatrix& gt_points);
double d_corr_cm_brute_force(const PointMatrix& pred_points, const PointMatrix& pred_nocs,
                             const PointMatrix& gt_points, const PointMatrix& gt_nocs);

struct FrameMetrics {
  double d_nocs = 0.0;
  double d_chamf = 0.0;  // cm
  double d_corr = 0.0;   // cm
};

/// Everything needed to score one tracked frame.
struct FrameObservation {
  PointMatrix pred_point_nocs;  // per partial-cloud point
  PointMatrix gt_point_nocs;
  PointMatrix pred_surface;  // task-space surface samples of the predicted mesh
  PointMatrix pred_surface_nocs;
  PointMatrix gt_surface;
  PointMatrix gt_surface_nocs;
};

FrameMetrics score_frame(const FrameObservation& obs);

struct SequenceReport {
  std::string seq_id;
  std::vector<FrameMetrics> frames;
  FrameMetrics mean;
  std::map<double, double> accuracy;  // threshold (cm) -> A_d
  double mean_stage_ms = 0.0;

  bool operator==(const SequenceReport& other) const;
};

/// Aggregates per-frame metrics. Throws AlignmentError when the lists differ
/// in length and InputError when empty.
SequenceReport evaluate_sequence(const std::vector<FrameObservation>& predictions,
                                 const std::vector<double>& thresholds_cm,
                                 const std::string& seq_id = "");

SequenceReport summarize(std::vector<FrameMetrics> frames, const std::vector<double>& thresholds_cm,
                         const std::string& seq_id = "");

void write_report(const SequenceReport& report, const std::filesystem::path& path);
SequenceReport read_report(const std::filesystem::path& path);

/// Mean of several reports' per-frame values pooled together.
SequenceReport pool_reports(const std::vector<SequenceReport>& reports,
                            const std::vector<double>& thresholds_cm, const std::string& id);

}  // namespace gtrack::eval

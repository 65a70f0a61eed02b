#pragma once

// The full two-frame network: encoder, fusion, refiner and warp field wired
// together as one module so checkpoints and training see a single object.

#include <torch/torch.h>

#include "gtrack/encoder.hpp"
#include "gtrack/fusion.hpp"
#include "gtrack/refiner.hpp"
#include "gtrack/warpfield.hpp"

namespace gtrack {

struct ModelConfig {
  EncoderConfig encoder;
  FusionConfig fusion;
  RefinerConfig refiner;
  WarpfieldConfig warp;
  double position_unit_m = 0.1;  // relative xyz is divided by this before the MLPs

  /// Checks that stage widths agree with each other; throws ConfigError.
  void validate() const;
};

struct StepInputs {
  torch::Tensor prev_xyz;     // [B, N1, 3] meters
  torch::Tensor prev_nocs;    // [B, N1, 3]
  torch::Tensor curr_xyz;     // [B, N2, 3] meters
  torch::Tensor mesh_points;  // [B, M, 3] canonical mesh samples (NOCS)
  torch::Tensor queries;      // [B, Q, 3] canonical warp queries
  torch::Tensor scatter_nocs; // optional [B, N2, 3]; defaults to the refined prediction
  bool transform_queries = false;  // apply the predicted mesh transform to queries
};

struct StepOutputs {
  torch::Tensor raw_logits;      // [B, N2, 3, bins]
  torch::Tensor refined_logits;  // [B, N2, 3, bins]
  torch::Tensor refined_nocs;    // [B, N2, 3] decoded
  torch::Tensor mesh_scale;      // [B, 3]
  torch::Tensor mesh_offset;     // [B, 3]
  torch::Tensor refined_mesh;    // [B, M, 3]
  torch::Tensor queries;         // [B, Q, 3] queries actually decoded
  torch::Tensor warped;          // [B, Q, 3] meters
};

struct StageTimings {
  double encode_ms = 0.0;
  double fuse_ms = 0.0;
  double refine_ms = 0.0;
  double warp_ms = 0.0;

  [[nodiscard]] double total_ms() const { return encode_ms + fuse_ms + refine_ms + warp_ms; }
};

class GarmentNetImpl : public torch::nn::Module {
 public:
  explicit GarmentNetImpl(ModelConfig config = {});

  StepOutputs forward(const StepInputs& in, StageTimings* timings = nullptr);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  PointEncoder& encoder() { return encoder_; }
  Fusion& fusion() { return fusion_; }
  Refiner& refiner() { return refiner_; }
  WarpField& warp() { return warp_; }

 private:
  ModelConfig config_;
  PointEncoder encoder_{nullptr};
  Fusion fusion_{nullptr};
  Refiner refiner_{nullptr};
  WarpField warp_{nullptr};
};
TORCH_MODULE(GarmentNet);

struct LossWeights {
  double nocs = 1.0;
  double refined_nocs = 1.0;
  double mesh = 1.0;
  double warp = 1.0;
};

struct LossTerms {
  torch::Tensor total;
  torch::Tensor nocs;
  torch::Tensor refined_nocs;
  torch::Tensor mesh;
  torch::Tensor warp;
};

/// Joint objective against ground-truth current NOCS, canonical mesh samples
/// and task-space warp targets.
LossTerms joint_loss(const StepOutputs& out, const torch::Tensor& gt_nocs,
                     const torch::Tensor& gt_mesh_points, const torch::Tensor& gt_warp,
                     const LossWeights& weights = {});

}  // namespace gtrack

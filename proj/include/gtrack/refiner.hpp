#pragma once

// NOCS refiner: a point-cloud branch that emits residual class logits and a
// mesh branch that emits one global scale and offset for the canonical shape.
// The branches exchange max-pooled global features.

#include <torch/torch.h>

#include "gtrack/nn.hpp"

namespace gtrack {

struct RefinerConfig {
  int64_t bins = 64;
  int64_t fusion_dim = 128;
  int64_t channel_scale = 4;  // 1 = widths of the reference network
  bool batch_norm = true;
  double scale_range = 0.5;   // scale = 1 + scale_range * tanh(.)
  double offset_range = 0.25; // offset = offset_range * tanh(.)
};

struct RefinerOutput {
  torch::Tensor refined_logits;  // [B, N, 3, bins]
  torch::Tensor delta_logits;    // [B, N, 3 * bins]
  torch::Tensor mesh_scale;      // [B, 3]
  torch::Tensor mesh_offset;     // [B, 3]
  torch::Tensor refined_mesh;    // [B, M, 3] refined input mesh points
  torch::Tensor pc_global;       // [B, D]
  torch::Tensor mesh_global;     // [B, D]
};

class RefinerImpl : public torch::nn::Module {
 public:
  explicit RefinerImpl(RefinerConfig config = {});

  /// Per-point input width: 3*bins logits + fusion + xyz + nocs.
  [[nodiscard]] int64_t pc_input_dim() const { return 3 * config_.bins + config_.fusion_dim + 6; }
  [[nodiscard]] const RefinerConfig& config() const { return config_; }

  /// Dense PC features [B,N,D] and their channel-wise max [B,D].
  std::pair<torch::Tensor, torch::Tensor> pc_features(const torch::Tensor& raw_logits,
                                                      const torch::Tensor& fusion,
                                                      const torch::Tensor& xyz,
                                                      const torch::Tensor& raw_nocs);

  /// Mesh branch: global shape feature and the raw 6-vector head output.
  std::pair<torch::Tensor, torch::Tensor> mesh_refine(const torch::Tensor& mesh_points,
                                                      const torch::Tensor& pc_global);

  /// Residual logits [B,N,3*bins] from dense PC features and the mesh global feature.
  torch::Tensor pc_refine(const torch::Tensor& pc_dense, const torch::Tensor& mesh_global);

  RefinerOutput forward(const torch::Tensor& raw_logits, const torch::Tensor& fusion,
                        const torch::Tensor& xyz, const torch::Tensor& raw_nocs,
                        const torch::Tensor& mesh_points);

  /// Maps the 6-vector head output to (scale, offset).
  [[nodiscard]] std::pair<torch::Tensor, torch::Tensor> scale_offset(const torch::Tensor& raw6) const;

  nn::Mlp& mesh_head() { return mesh_refine_mlp_; }
  nn::Mlp& pc_head() { return pc_refine_mlp_; }

 private:
  RefinerConfig config_;
  nn::Mlp pc_pointnet_{nullptr};
  nn::Mlp mesh_pointnet_{nullptr};
  nn::Mlp mesh_fusion_{nullptr};
  nn::Mlp mesh_refine_mlp_{nullptr};
  nn::Mlp pc_refine_mlp_{nullptr};
};
TORCH_MODULE(Refiner);

/// v' = clamp((v - 0.5) * scale + 0.5 + offset, 0, 1) for [B, M, 3] points and
/// [B, 3] parameters. Scaling about the cube center matches the mesh noise model.
torch::Tensor apply_mesh_transform(const torch::Tensor& points, const torch::Tensor& scale,
                                   const torch::Tensor& offset);

/// Mean squared vertex distance.
torch::Tensor mesh_l2_loss(const torch::Tensor& refined, const torch::Tensor& gt);

}  // namespace gtrack

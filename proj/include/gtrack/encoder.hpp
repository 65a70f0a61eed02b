#pragma once

// Per-point geometric features from a single partial cloud: a UNet over a
// sparse voxel hash (residual blocks on the way down, transposed convolutions
// with skip concatenation on the way up).

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace gtrack {

struct EncoderConfig {
  double voxel_size = 0.01;                          // meters
  std::vector<int64_t> encoder_channels{64, 64, 128, 256};
  std::vector<int64_t> decoder_channels{64, 64, 64, 128};  // [0] is the output width
};

/// Neighbor tables for one cloud batch, shared by every layer at a level.
struct VoxelHierarchy {
  std::vector<torch::Tensor> coords;      // per level [V_l, 4] (batch, x, y, z), int64
  std::vector<torch::Tensor> submanifold; // per level [V_l, 27] neighbor rows, -1 = empty
  std::vector<torch::Tensor> down;        // level l -> l+1: [V_{l+1}, 8] child rows in level l
  std::vector<torch::Tensor> up;          // level l+1 -> l: [V_l, 8] parent row in its slot
  torch::Tensor point_to_voxel;           // [B*N] row of each point's level-0 voxel
};

/// Voxelizes zero-centered [B, N, 3] points and builds `levels` levels of
/// kernel maps. Voxels are sorted by (batch, x, y, z) so the result does not
/// depend on point order.
VoxelHierarchy build_hierarchy(const torch::Tensor& centered_points, double voxel_size, int levels);

/// Centroid of each cloud in [B, N, 3], summed in a canonical point order so
/// that it is bit-identical under any permutation of the points.
torch::Tensor canonical_centroid(const torch::Tensor& points);

/// Convolution over a precomputed neighbor table: out[i] = sum_k W_k x[nbr[i,k]] + b.
class SparseConvImpl : public torch::nn::Module {
 public:
  SparseConvImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_volume);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& neighbors);

 private:
  int64_t in_;
  int64_t kernel_;
  torch::Tensor weight_;
  torch::Tensor bias_;
};
TORCH_MODULE(SparseConv);

class SparseResBlockImpl : public torch::nn::Module {
 public:
  explicit SparseResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& neighbors);

 private:
  SparseConv conv1_{nullptr};
  SparseConv conv2_{nullptr};
};
TORCH_MODULE(SparseResBlock);

class PointEncoderImpl : public torch::nn::Module {
 public:
  explicit PointEncoderImpl(EncoderConfig config = {});

  /// [B, N, 3] meters -> [B, N, C] features. Each cloud is zero-centered first.
  torch::Tensor forward(const torch::Tensor& points);

  [[nodiscard]] int64_t output_dim() const { return config_.decoder_channels.front(); }
  [[nodiscard]] const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  SparseConv stem_{nullptr};
  std::vector<SparseConv> downs_;
  std::vector<SparseResBlock> blocks_;
  std::vector<SparseConv> ups_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(PointEncoder);

}  // namespace gtrack

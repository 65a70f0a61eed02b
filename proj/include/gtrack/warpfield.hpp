#pragma once

// Canonical-to-task warp field: per-point features are max-pooled into a
// NOCS voxel grid, densified with a small 3D UNet and decoded at arbitrary
// canonical query points by trilinear sampling plus an MLP.

#include <torch/torch.h>

#include "gtrack/nn.hpp"

namespace gtrack {

struct WarpfieldConfig {
  int64_t grid = 32;
  int64_t fusion_dim = 128;
  int64_t scatter_dim = 32;      // per-point projection width before pooling
  int64_t base_channels = 16;    // UNet width at full resolution, doubled per level
  int64_t volume_channels = 64;  // width of the densified volume
  std::vector<int64_t> decoder_channels{128, 128};
};

struct FeatureVolume {
  torch::Tensor volume;  // [B, C, G, G, G], indexed (x, y, z)
  torch::Tensor mask;    // [B, G, G, G] bool
};

/// Channel-wise max of `features` [B, N, C] per NOCS cell. Cells are
/// nocs::to_bins(nocs, grid); empty cells stay exactly zero.
FeatureVolume scatter_max(const torch::Tensor& features, const torch::Tensor& nocs, int64_t grid);

/// Features of `volume` [B, C, G, G, G] at NOCS points [B, Q, 3] by trilinear
/// interpolation between cell centers (border-clamped) -> [B, Q, C].
torch::Tensor sample_volume(const torch::Tensor& volume, const torch::Tensor& points);

class DoubleConvImpl : public torch::nn::Module {
 public:
  DoubleConvImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d a_{nullptr};
  torch::nn::Conv3d b_{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Three-level 3D UNet with skip concatenation; spatial shape is preserved.
class VolumeUNetImpl : public torch::nn::Module {
 public:
  VolumeUNetImpl(int64_t in, int64_t base, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  DoubleConv enc0_{nullptr};
  DoubleConv enc1_{nullptr};
  DoubleConv bottom_{nullptr};
  torch::nn::ConvTranspose3d up1_{nullptr};
  DoubleConv dec1_{nullptr};
  torch::nn::ConvTranspose3d up0_{nullptr};
  DoubleConv dec0_{nullptr};
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(VolumeUNet);

class WarpFieldImpl : public torch::nn::Module {
 public:
  explicit WarpFieldImpl(WarpfieldConfig config = {});

  /// Projects fusion features and pools them at their NOCS cells.
  FeatureVolume scatter(const torch::Tensor& fusion, const torch::Tensor& nocs);

  /// UNet over a scattered volume.
  torch::Tensor densify(const torch::Tensor& volume);

  /// Task-space positions of canonical queries [B, Q, 3]. The decoder predicts
  /// an offset from `center` [B, 3], the current-frame centroid.
  torch::Tensor query(const torch::Tensor& queries, const torch::Tensor& dense,
                      const torch::Tensor& center);

  torch::Tensor forward(const torch::Tensor& fusion, const torch::Tensor& nocs,
                        const torch::Tensor& queries, const torch::Tensor& center);

  [[nodiscard]] const WarpfieldConfig& config() const { return config_; }
  nn::Mlp& decoder() { return decoder_; }

 private:
  WarpfieldConfig config_;
  torch::nn::Linear project_{nullptr};
  VolumeUNet unet_{nullptr};
  nn::Mlp decoder_{nullptr};
};
TORCH_MODULE(WarpField);

/// Mean squared distance between aligned [..., 3] point sets.
torch::Tensor warp_loss(const torch::Tensor& pred, const torch::Tensor& gt);

}  // namespace gtrack

#include "gtrack/warpfield.hpp"

#include "gtrack/nocs.hpp"

namespace gtrack {

namespace F = torch::nn::functional;

FeatureVolume scatter_max(const torch::Tensor& features, const torch::Tensor& nocs, int64_t grid) {
  TORCH_CHECK(features.dim() == 3 && nocs.dim() == 3 && nocs.size(-1) == 3,
              "scatter expects [B, N, C] features and [B, N, 3] NOCS");
  TORCH_CHECK(features.size(0) == nocs.size(0) && features.size(1) == nocs.size(1),
              "features and NOCS must align");
  const int64_t B = features.size(0);
  const int64_t N = features.size(1);
  const int64_t C = features.size(2);
  const int64_t cells = grid * grid * grid;
  auto flat = torch::zeros({B * cells, C}, features.options());
  auto mask = torch::zeros({B * cells}, torch::TensorOptions().dtype(torch::kBool).device(features.device()));
  if (N > 0) {
    auto bins = nocs::to_bins(nocs, static_cast<int>(grid)).to(features.device());
    auto cell = (bins.select(-1, 0) * grid + bins.select(-1, 1)) * grid + bins.select(-1, 2);
    cell = cell + torch::arange(B, cell.options()).unsqueeze(1) * cells;
    cell = cell.reshape({B * N});
    auto index = cell.unsqueeze(1).expand({B * N, C});
    flat = flat.scatter_reduce(0, index, features.reshape({B * N, C}), "amax", /*include_self=*/false);
    mask.index_fill_(0, cell, true);
  }
  return {flat.reshape({B, grid, grid, grid, C}).permute({0, 4, 1, 2, 3}).contiguous(),
          mask.reshape({B, grid, grid, grid})};
}

torch::Tensor sample_volume(const torch::Tensor& volume, const torch::Tensor& points) {
  const int64_t B = points.size(0);
  const int64_t Q = points.size(1);
  // grid_sample reads (x, y, z) as (W, H, D); the volume is laid out (x, y, z)
  // along (D, H, W), hence the flip.
  auto grid = (points * 2.0 - 1.0).flip(-1).reshape({B, 1, 1, Q, 3}).to(volume.dtype());
  auto out = F::grid_sample(volume, grid,
                            F::GridSampleFuncOptions()
                                .mode(torch::kBilinear)
                                .padding_mode(torch::kBorder)
                                .align_corners(false));
  return out.reshape({B, volume.size(1), Q}).transpose(1, 2);
}

DoubleConvImpl::DoubleConvImpl(int64_t in, int64_t out) {
  a_ = register_module("a", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).padding(1)));
  b_ = register_module("b", torch::nn::Conv3d(torch::nn::Conv3dOptions(out, out, 3).padding(1)));
}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) {
  return torch::relu(b_->forward(torch::relu(a_->forward(x))));
}

VolumeUNetImpl::VolumeUNetImpl(int64_t in, int64_t base, int64_t out) {
  enc0_ = register_module("enc0", DoubleConv(in, base));
  enc1_ = register_module("enc1", DoubleConv(base, 2 * base));
  bottom_ = register_module("bottom", DoubleConv(2 * base, 4 * base));
  up1_ = register_module("up1", torch::nn::ConvTranspose3d(
                                    torch::nn::ConvTranspose3dOptions(4 * base, 2 * base, 2).stride(2)));
  dec1_ = register_module("dec1", DoubleConv(4 * base, 2 * base));
  up0_ = register_module("up0", torch::nn::ConvTranspose3d(
                                    torch::nn::ConvTranspose3dOptions(2 * base, base, 2).stride(2)));
  dec0_ = register_module("dec0", DoubleConv(2 * base, base));
  head_ = register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(base, out, 1)));
}

torch::Tensor VolumeUNetImpl::forward(const torch::Tensor& x) {
  TORCH_CHECK(x.size(2) % 4 == 0 && x.size(3) % 4 == 0 && x.size(4) % 4 == 0,
              "volume sides must be divisible by 4");
  auto e0 = enc0_->forward(x);
  auto e1 = enc1_->forward(F::max_pool3d(e0, F::MaxPool3dFuncOptions(2)));
  auto m = bottom_->forward(F::max_pool3d(e1, F::MaxPool3dFuncOptions(2)));
  auto d1 = dec1_->forward(torch::cat({up1_->forward(m), e1}, 1));
  auto d0 = dec0_->forward(torch::cat({up0_->forward(d1), e0}, 1));
  return head_->forward(d0);
}

WarpFieldImpl::WarpFieldImpl(WarpfieldConfig config) : config_(std::move(config)) {
  TORCH_CHECK(config_.grid >= 4 && config_.grid % 4 == 0, "warp grid must be a multiple of 4");
  project_ = register_module("project", torch::nn::Linear(config_.fusion_dim, config_.scatter_dim));
  unet_ = register_module("unet",
                          VolumeUNet(config_.scatter_dim, config_.base_channels, config_.volume_channels));
  std::vector<int64_t> channels{config_.volume_channels + 3};
  channels.insert(channels.end(), config_.decoder_channels.begin(), config_.decoder_channels.end());
  channels.push_back(3);
  decoder_ = register_module("decoder", nn::Mlp(nn::MlpOptions{channels}));
}

FeatureVolume WarpFieldImpl::scatter(const torch::Tensor& fusion, const torch::Tensor& nocs) {
  return scatter_max(project_->forward(fusion), nocs, config_.grid);
}

torch::Tensor WarpFieldImpl::densify(const torch::Tensor& volume) { return unet_->forward(volume); }

torch::Tensor WarpFieldImpl::query(const torch::Tensor& queries, const torch::Tensor& dense,
                                   const torch::Tensor& center) {
  auto feat = sample_volume(dense, queries);
  auto offset = decoder_->forward(torch::cat({feat, queries.to(feat.dtype())}, -1));
  return offset + center.unsqueeze(1);
}

torch::Tensor WarpFieldImpl::forward(const torch::Tensor& fusion, const torch::Tensor& nocs,
                                     const torch::Tensor& queries, const torch::Tensor& center) {
  return query(queries, densify(scatter(fusion, nocs).volume), center);
}

torch::Tensor warp_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  TORCH_CHECK(pred.sizes() == gt.sizes(), "warp loss inputs must align");
  return (pred - gt).square().sum(-1).mean();
}

}  // namespace gtrack

#include "gtrack/refiner.hpp"

namespace gtrack {

namespace {

// Per-sample canonical row order of [B, N, C] so the pooled features do not
// depend on how the caller ordered the points.
torch::Tensor canonical_rows(const torch::Tensor& x) {
  std::vector<torch::Tensor> perms;
  for (int64_t b = 0; b < x.size(0); ++b) perms.push_back(nn::canonical_order(x[b]).to(x.device()));
  return torch::stack(perms);
}

torch::Tensor gather_rows(const torch::Tensor& x, const torch::Tensor& perm) {
  return x.gather(1, perm.unsqueeze(-1).expand({-1, -1, x.size(-1)}));
}

}  // namespace

RefinerImpl::RefinerImpl(RefinerConfig config) : config_(std::move(config)) {
  const int64_t s = config_.channel_scale;
  const bool bn = config_.batch_norm;
  using nn::scaled;
  const int64_t global = scaled(1024, s);
  pc_pointnet_ = register_module(
      "pc_pointnet", nn::Mlp(nn::MlpOptions{{pc_input_dim(), scaled(256, s), scaled(256, s), global}, bn}));
  // The mesh branch runs without normalization. Every point of a sample
  // shares one global scale/offset, so batch statistics over a few samples
  // mostly normalize away the very signal the head has to read.
  mesh_pointnet_ = register_module(
      "mesh_pointnet", nn::Mlp(nn::MlpOptions{{3, scaled(64, s), scaled(128, s), global}, false}));
  mesh_fusion_ = register_module(
      "mesh_fusion",
      nn::Mlp(nn::MlpOptions{{2 * global, scaled(512, s), scaled(512, s), global}, false}));
  mesh_refine_mlp_ = register_module(
      "mesh_refine", nn::Mlp(nn::MlpOptions{{global, scaled(512, s), scaled(256, s), 6}, false, true}));
  pc_refine_mlp_ = register_module(
      "pc_refine",
      nn::Mlp(nn::MlpOptions{{2 * global, scaled(1024, s), scaled(512, s), 3 * config_.bins}, bn, true}));
}

std::pair<torch::Tensor, torch::Tensor> RefinerImpl::pc_features(const torch::Tensor& raw_logits,
                                                                 const torch::Tensor& fusion,
                                                                 const torch::Tensor& xyz,
                                                                 const torch::Tensor& raw_nocs) {
  const auto B = fusion.size(0);
  const auto N = fusion.size(1);
  TORCH_CHECK(raw_logits.size(0) == B && raw_logits.size(1) == N && xyz.size(1) == N &&
                  raw_nocs.size(1) == N,
              "refiner inputs are not aligned");
  TORCH_CHECK(raw_logits.size(-1) == config_.bins && fusion.size(-1) == config_.fusion_dim,
              "refiner input widths do not match its configuration");
  auto input = torch::cat({raw_logits.reshape({B, N, -1}), fusion, xyz, raw_nocs}, -1);
  const auto perm = canonical_rows(input);
  auto sorted = pc_pointnet_->forward(gather_rows(input, perm));
  std::vector<torch::Tensor> restore;
  for (int64_t b = 0; b < B; ++b) restore.push_back(nn::invert_permutation(perm[b]));
  auto dense = gather_rows(sorted, torch::stack(restore));
  return {dense, std::get<0>(sorted.max(1))};
}

std::pair<torch::Tensor, torch::Tensor> RefinerImpl::mesh_refine(const torch::Tensor& mesh_points,
                                                                 const torch::Tensor& pc_global) {
  TORCH_CHECK(mesh_points.size(1) >= 1, "mesh refiner needs at least one mesh point");
  const auto M = mesh_points.size(1);
  // Centered input: the pooled ReLU features then act like support functions
  // of the shape, which makes global scale and shift easy to read off.
  auto ordered = gather_rows(mesh_points, canonical_rows(mesh_points));
  auto dense = mesh_pointnet_->forward((ordered - 0.5) * 2.0);
  auto fused = mesh_fusion_->forward(
      torch::cat({dense, pc_global.unsqueeze(1).expand({-1, M, -1})}, -1));
  auto global = std::get<0>(fused.max(1));
  return {global, mesh_refine_mlp_->forward(global)};
}

torch::Tensor RefinerImpl::pc_refine(const torch::Tensor& pc_dense, const torch::Tensor& mesh_global) {
  const auto N = pc_dense.size(1);
  return pc_refine_mlp_->forward(
      torch::cat({pc_dense, mesh_global.unsqueeze(1).expand({-1, N, -1})}, -1));
}

std::pair<torch::Tensor, torch::Tensor> RefinerImpl::scale_offset(const torch::Tensor& raw6) const {
  auto scale = 1.0 + config_.scale_range * torch::tanh(raw6.narrow(-1, 0, 3));
  auto offset = config_.offset_range * torch::tanh(raw6.narrow(-1, 3, 3));
  return {scale, offset};
}

RefinerOutput RefinerImpl::forward(const torch::Tensor& raw_logits, const torch::Tensor& fusion,
                                   const torch::Tensor& xyz, const torch::Tensor& raw_nocs,
                                   const torch::Tensor& mesh_points) {
  RefinerOutput out;
  auto [pc_dense, pc_global] = pc_features(raw_logits, fusion, xyz, raw_nocs);
  auto [mesh_global, raw6] = mesh_refine(mesh_points, pc_global);
  std::tie(out.mesh_scale, out.mesh_offset) = scale_offset(raw6);
  out.delta_logits = pc_refine(pc_dense, mesh_global);
  out.refined_logits = raw_logits + out.delta_logits.reshape(raw_logits.sizes());
  out.refined_mesh = apply_mesh_transform(mesh_points, out.mesh_scale, out.mesh_offset);
  out.pc_global = pc_global;
  out.mesh_global = mesh_global;
  return out;
}

torch::Tensor apply_mesh_transform(const torch::Tensor& points, const torch::Tensor& scale,
                                   const torch::Tensor& offset) {
  // Written as a residual so the identity parameters return the input bit for bit.
  auto residual = (points - 0.5) * (scale.unsqueeze(1) - 1.0) + offset.unsqueeze(1);
  return torch::clamp(points + residual, 0.0, 1.0);
}

torch::Tensor mesh_l2_loss(const torch::Tensor& refined, const torch::Tensor& gt) {
  TORCH_CHECK(refined.sizes() == gt.sizes(), "mesh loss inputs must align");
  return (refined - gt).square().sum(-1).mean();
}

}  // namespace gtrack

#include "gtrack/model.hpp"

#include <chrono>

#include "gtrack/nocs.hpp"
#include "gtrack/types.hpp"

namespace gtrack {

namespace {

class StageClock {
 public:
  explicit StageClock(double* sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    if (sink_ != nullptr) {
      *sink_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  double* sink_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

void ModelConfig::validate() const {
  if (encoder.decoder_channels.empty() || encoder.encoder_channels.size() != encoder.decoder_channels.size()) {
    throw ConfigError("encoder channel lists must be non-empty and of equal length");
  }
  if (encoder.voxel_size <= 0.0) {
    throw ConfigError("voxel size must be positive");
  }
  if (encoder.decoder_channels.front() != fusion.feature_dim) {
    throw ConfigError("encoder output width must equal the fusion feature width");
  }
  if (fusion.output_channels.empty() || fusion.output_channels.front() != fusion.mid_dim) {
    throw ConfigError("fusion output map must start at the middle width");
  }
  if (fusion.output_channels.back() != refiner.fusion_dim || refiner.fusion_dim != warp.fusion_dim) {
    throw ConfigError("fusion width must match refiner and warp field inputs");
  }
  if (fusion.bins != refiner.bins || fusion.bins < 2) {
    throw ConfigError("bin counts of fusion and refiner must agree");
  }
  if (warp.grid < 4 || warp.grid % 4 != 0) {
    throw ConfigError("warp grid must be a positive multiple of 4");
  }
  if (!(position_unit_m > 0.0)) {
    throw ConfigError("position unit must be positive");
  }
  if (refiner.channel_scale < 1) {
    throw ConfigError("channel scale must be at least 1");
  }
}

GarmentNetImpl::GarmentNetImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  encoder_ = register_module("encoder", PointEncoder(config_.encoder));
  fusion_ = register_module("fusion", Fusion(config_.fusion));
  refiner_ = register_module("refiner", Refiner(config_.refiner));
  warp_ = register_module("warp", WarpField(config_.warp));
}

StepOutputs GarmentNetImpl::forward(const StepInputs& in, StageTimings* timings) {
  auto sink = [&](double StageTimings::*field) { return timings ? &(timings->*field) : nullptr; };
  StepOutputs out;
  torch::Tensor f1;
  torch::Tensor f2;
  torch::Tensor center;
  {
    StageClock clock(sink(&StageTimings::encode_ms));
    f1 = encoder_->forward(in.prev_xyz);
    f2 = encoder_->forward(in.curr_xyz);
    center = canonical_centroid(in.curr_xyz);
  }
  // Both frames are expressed relative to the current centroid so the
  // embeddings carry the inter-frame motion.
  auto prev_rel = (in.prev_xyz - center.unsqueeze(1)) / config_.position_unit_m;
  auto curr_rel = (in.curr_xyz - center.unsqueeze(1)) / config_.position_unit_m;
  FusionOutput fused;
  {
    StageClock clock(sink(&StageTimings::fuse_ms));
    fused = fusion_->forward(f1, f2, prev_rel, in.prev_nocs, curr_rel);
    out.raw_logits = fused.logits;
  }
  {
    StageClock clock(sink(&StageTimings::refine_ms));
    auto raw_nocs = nocs::decode(out.raw_logits.detach()).to(curr_rel.dtype());
    auto r = refiner_->forward(out.raw_logits, fused.features, curr_rel, raw_nocs, in.mesh_points);
    out.refined_logits = r.refined_logits;
    out.mesh_scale = r.mesh_scale;
    out.mesh_offset = r.mesh_offset;
    out.refined_mesh = r.refined_mesh;
    out.refined_nocs = nocs::decode(out.refined_logits.detach()).to(curr_rel.dtype());
  }
  {
    StageClock clock(sink(&StageTimings::warp_ms));
    out.queries = in.transform_queries
                      ? apply_mesh_transform(in.queries, out.mesh_scale, out.mesh_offset)
                      : in.queries;
    const auto& scatter_nocs = in.scatter_nocs.defined() ? in.scatter_nocs : out.refined_nocs;
    out.warped = warp_->forward(fused.features, scatter_nocs, out.queries, center);
  }
  return out;
}

LossTerms joint_loss(const StepOutputs& out, const torch::Tensor& gt_nocs,
                     const torch::Tensor& gt_mesh_points, const torch::Tensor& gt_warp,
                     const LossWeights& weights) {
  LossTerms t;
  t.nocs = nocs_classification_loss(out.raw_logits, gt_nocs);
  t.refined_nocs = nocs_classification_loss(out.refined_logits, gt_nocs);
  t.mesh = mesh_l2_loss(out.refined_mesh, gt_mesh_points);
  t.warp = warp_loss(out.warped, gt_warp);
  t.total = weights.nocs * t.nocs + weights.refined_nocs * t.refined_nocs + weights.mesh * t.mesh +
            weights.warp * t.warp;
  return t;
}

}  // namespace gtrack

#pragma once

// Inter-frame feature fusion: NOCS-aware positional embeddings, relation
// attention (self then cross) and the per-axis NOCS classification head.

#include <torch/torch.h>

#include "gtrack/nn.hpp"

namespace gtrack {

struct FusionConfig {
  int64_t feature_dim = 64;  // encoder output and embedding width
  int64_t mid_dim = 64;
  std::vector<int64_t> output_channels{64, 128, 128};  // final map of every attention block
  int64_t bins = 64;
  bool use_nocs_embedding = true;  // false: previous-frame embedding sees xyz only
  bool query_residual = true;      // add a linear projection of the query input
  double initial_logit_scale = 10.0;
};

/// Single-head relation attention. Projected queries and keys are
/// L2-normalized, so logits are cosine similarities times a learned scale.
class RelationAttentionImpl : public torch::nn::Module {
 public:
  RelationAttentionImpl(int64_t in_dim, const FusionConfig& config);

  /// q: [B, Nq, C], k/v: [B, Nk, C] -> [B, Nq, out].
  torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

  /// Softmax weights [B, Nq, Nk] of the last forward call (for inspection).
  [[nodiscard]] const torch::Tensor& last_attention() const { return last_attention_; }
  [[nodiscard]] int64_t output_dim() const { return out_->out_dim(); }

 private:
  torch::nn::Linear wq_{nullptr};
  torch::nn::Linear wk_{nullptr};
  torch::nn::Linear wv_{nullptr};
  torch::Tensor log_scale_;
  nn::Mlp out_{nullptr};
  torch::nn::Linear skip_{nullptr};
  torch::Tensor last_attention_;
};
TORCH_MODULE(RelationAttention);

struct FusionOutput {
  torch::Tensor features;  // [B, N2, D] aligned with current-frame points
  torch::Tensor logits;    // [B, N2, 3, bins]
};

class FusionImpl : public torch::nn::Module {
 public:
  explicit FusionImpl(FusionConfig config = {});

  /// emb1 from [xyz1, nocs1] (or xyz1 alone with the embedding ablated), emb2 from xyz2.
  std::pair<torch::Tensor, torch::Tensor> positional_embedding(const torch::Tensor& prev_xyz,
                                                               const torch::Tensor& prev_nocs,
                                                               const torch::Tensor& curr_xyz);

  /// X1 = Att(X1,X1,X1); X2 = Att(X2,X2,X2); X = Att(X2, X1, X1). Both point
  /// sets are processed in a canonical order keyed on their inputs and the
  /// result is returned in the caller's order.
  torch::Tensor fuse(const torch::Tensor& prev_features, const torch::Tensor& curr_features,
                     const torch::Tensor& prev_key, const torch::Tensor& curr_key);

  torch::Tensor predict_logits(const torch::Tensor& fusion);

  /// Full stage: embeddings added to encoder features, fusion, logits.
  FusionOutput forward(const torch::Tensor& prev_features, const torch::Tensor& curr_features,
                       const torch::Tensor& prev_xyz, const torch::Tensor& prev_nocs,
                       const torch::Tensor& curr_xyz);

  [[nodiscard]] const FusionConfig& config() const { return config_; }
  [[nodiscard]] int64_t output_dim() const { return config_.output_channels.back(); }
  RelationAttention& self_attention() { return self_attn_; }
  RelationAttention& cross_attention() { return cross_attn_; }
  nn::Mlp& prev_embedding() { return f1_; }
  nn::Mlp& curr_embedding() { return f2_; }

 private:
  FusionConfig config_;
  nn::Mlp f1_{nullptr};
  nn::Mlp f2_{nullptr};
  RelationAttention self_attn_{nullptr};
  RelationAttention cross_attn_{nullptr};
  nn::Mlp head_{nullptr};
};
TORCH_MODULE(Fusion);

/// Mean over points and axes of the cross-entropy against nocs::to_bins(gt).
torch::Tensor nocs_classification_loss(const torch::Tensor& logits, const torch::Tensor& gt_coords);

}  // namespace gtrack

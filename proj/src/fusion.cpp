#include "gtrack/fusion.hpp"

#include <cmath>

#include "gtrack/nocs.hpp"

namespace gtrack {

RelationAttentionImpl::RelationAttentionImpl(int64_t in_dim, const FusionConfig& config) {
  wq_ = register_module("wq", torch::nn::Linear(in_dim, config.mid_dim));
  wk_ = register_module("wk", torch::nn::Linear(in_dim, config.mid_dim));
  wv_ = register_module("wv", torch::nn::Linear(in_dim, config.mid_dim));
  log_scale_ = register_parameter("log_scale",
                                  torch::full({1}, std::log(config.initial_logit_scale)));
  TORCH_CHECK(config.output_channels.front() == config.mid_dim,
              "attention output map must start at the middle width");
  out_ = register_module("out", nn::Mlp(nn::MlpOptions{config.output_channels}));
  if (config.query_residual) {
    skip_ = register_module(
        "skip", torch::nn::Linear(torch::nn::LinearOptions(in_dim, config.output_channels.back()).bias(false)));
  }
}

torch::Tensor RelationAttentionImpl::forward(const torch::Tensor& q, const torch::Tensor& k,
                                             const torch::Tensor& v) {
  TORCH_CHECK(k.size(1) > 0, "attention needs at least one key");
  TORCH_CHECK(k.size(1) == v.size(1), "keys and values must align");
  auto qp = torch::nn::functional::normalize(wq_->forward(q),
                                             torch::nn::functional::NormalizeFuncOptions().dim(-1));
  auto kp = torch::nn::functional::normalize(wk_->forward(k),
                                             torch::nn::functional::NormalizeFuncOptions().dim(-1));
  auto vp = wv_->forward(v);
  auto logits = torch::matmul(qp, kp.transpose(1, 2)) * log_scale_.exp();
  last_attention_ = torch::softmax(logits, -1);
  auto out = out_->forward(torch::matmul(last_attention_, vp));
  if (!skip_.is_empty()) {
    out = out + skip_->forward(q);
  }
  return out;
}

FusionImpl::FusionImpl(FusionConfig config) : config_(std::move(config)) {
  const int64_t d = config_.feature_dim;
  f1_ = register_module("f1", nn::Mlp(nn::MlpOptions{{config_.use_nocs_embedding ? 6 : 3, d, d}}));
  f2_ = register_module("f2", nn::Mlp(nn::MlpOptions{{3, d, d}}));
  self_attn_ = register_module("self_attn", RelationAttention(d, config_));
  cross_attn_ = register_module("cross_attn", RelationAttention(output_dim(), config_));
  head_ = register_module("head", nn::Mlp(nn::MlpOptions{{output_dim(), output_dim(), 3 * config_.bins}}));
}

std::pair<torch::Tensor, torch::Tensor> FusionImpl::positional_embedding(
    const torch::Tensor& prev_xyz, const torch::Tensor& prev_nocs, const torch::Tensor& curr_xyz) {
  if (config_.use_nocs_embedding) {
    if ((prev_nocs < 0).any().item<bool>() || (prev_nocs > 1).any().item<bool>()) {
      throw InputError("previous-frame NOCS must lie in [0,1]");
    }
    return {f1_->forward(torch::cat({prev_xyz, prev_nocs}, -1)), f2_->forward(curr_xyz)};
  }
  return {f1_->forward(prev_xyz), f2_->forward(curr_xyz)};
}

torch::Tensor FusionImpl::fuse(const torch::Tensor& prev_features, const torch::Tensor& curr_features,
                               const torch::Tensor& prev_key, const torch::Tensor& curr_key) {
  const int64_t B = curr_features.size(0);
  std::vector<torch::Tensor> x1;
  std::vector<torch::Tensor> x2;
  std::vector<torch::Tensor> restore;
  for (int64_t b = 0; b < B; ++b) {
    auto p1 = nn::canonical_order(prev_key[b]).to(prev_features.device());
    auto p2 = nn::canonical_order(curr_key[b]).to(curr_features.device());
    x1.push_back(prev_features[b].index_select(0, p1));
    x2.push_back(curr_features[b].index_select(0, p2));
    restore.push_back(nn::invert_permutation(p2));
  }
  auto X1 = torch::stack(x1);
  auto X2 = torch::stack(x2);
  auto bar1 = self_attn_->forward(X1, X1, X1);
  auto bar2 = self_attn_->forward(X2, X2, X2);
  auto fused = cross_attn_->forward(bar2, bar1, bar1);
  std::vector<torch::Tensor> out;
  for (int64_t b = 0; b < B; ++b) {
    out.push_back(fused[b].index_select(0, restore[b]));
  }
  return torch::stack(out);
}

torch::Tensor FusionImpl::predict_logits(const torch::Tensor& fusion) {
  auto logits = head_->forward(fusion);
  auto shape = fusion.sizes().vec();
  shape.back() = 3;
  shape.push_back(config_.bins);
  return logits.reshape(shape);
}

FusionOutput FusionImpl::forward(const torch::Tensor& prev_features, const torch::Tensor& curr_features,
                                 const torch::Tensor& prev_xyz, const torch::Tensor& prev_nocs,
                                 const torch::Tensor& curr_xyz) {
  TORCH_CHECK(prev_features.size(-1) == config_.feature_dim &&
                  curr_features.size(-1) == config_.feature_dim,
              "encoder width does not match the embedding width");
  auto [emb1, emb2] = positional_embedding(prev_xyz, prev_nocs, curr_xyz);
  FusionOutput out;
  out.features = fuse(prev_features + emb1, curr_features + emb2,
                      torch::cat({prev_xyz, prev_nocs}, -1), curr_xyz);
  out.logits = predict_logits(out.features);
  return out;
}

torch::Tensor nocs_classification_loss(const torch::Tensor& logits, const torch::Tensor& gt_coords) {
  TORCH_CHECK(logits.dim() >= 3 && logits.size(-2) == 3, "expected [...,3,B] logits");
  const auto bins = logits.size(-1);
  auto target = nocs::to_bins(gt_coords, static_cast<int>(bins)).reshape({-1});
  return torch::nn::functional::cross_entropy(logits.reshape({-1, bins}), target);
}

}  // namespace gtrack

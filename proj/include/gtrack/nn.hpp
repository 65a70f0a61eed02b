#pragma once

#include <vector>

#include <torch/torch.h>

namespace gtrack::nn {

struct MlpOptions {
  std::vector<int64_t> channels;  // input, hidden..., output
  bool batch_norm = false;        // on hidden layers only
  bool zero_last = false;         // zero weights and bias of the output layer
};

/// Shared per-point MLP: Linear (+BN) + ReLU on every hidden layer, linear output.
/// Accepts [..., C_in] and returns [..., C_out].
class MlpImpl : public torch::nn::Module {
 public:
  explicit MlpImpl(const MlpOptions& options);
  torch::Tensor forward(const torch::Tensor& x);

  [[nodiscard]] torch::nn::Linear last() const { return layers_.back(); }
  [[nodiscard]] int64_t in_dim() const { return options_.channels.front(); }
  [[nodiscard]] int64_t out_dim() const { return options_.channels.back(); }

 private:
  MlpOptions options_;
  std::vector<torch::nn::Linear> layers_;
  std::vector<torch::nn::BatchNorm1d> norms_;
};
TORCH_MODULE(Mlp);

/// Divides a full-scale width by `scale`, keeping at least `floor`.
int64_t scaled(int64_t width, int64_t scale, int64_t floor = 8);

/// Lexicographic row order of a [N, D] tensor (CPU), used to give point sets
/// a canonical order so set operations do not depend on input order.
torch::Tensor canonical_order(const torch::Tensor& rows);

/// Inverse of a permutation index tensor.
torch::Tensor invert_permutation(const torch::Tensor& perm);

}  // namespace gtrack::nn

#include "gtrack/nn.hpp"

#include <algorithm>
#include <numeric>

namespace gtrack::nn {

MlpImpl::MlpImpl(const MlpOptions& options) : options_(options) {
  TORCH_CHECK(options_.channels.size() >= 2, "an MLP needs at least input and output widths");
  const size_t n = options_.channels.size() - 1;
  for (size_t i = 0; i < n; ++i) {
    auto lin = register_module("fc" + std::to_string(i),
                               torch::nn::Linear(options_.channels[i], options_.channels[i + 1]));
    {
      // He init keeps activation scale through deep ReLU stacks; the default
      // uniform init shrinks it layer by layer until biases dominate.
      torch::NoGradGuard guard;
      torch::nn::init::kaiming_normal_(lin->weight, 0.0, torch::kFanIn, torch::kReLU);
      lin->bias.zero_();
    }
    layers_.push_back(lin);
    if (i + 1 < n && options_.batch_norm) {
      norms_.push_back(register_module("bn" + std::to_string(i),
                                       torch::nn::BatchNorm1d(options_.channels[i + 1])));
    }
  }
  if (options_.zero_last) {
    torch::NoGradGuard guard;
    layers_.back()->weight.zero_();
    layers_.back()->bias.zero_();
  }
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) {
  auto shape = x.sizes().vec();
  auto h = x.reshape({-1, shape.back()});
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h);
    if (i + 1 < layers_.size()) {
      if (options_.batch_norm) {
        h = norms_[i]->forward(h);
      }
      h = torch::relu(h);
    }
  }
  shape.back() = options_.channels.back();
  return h.reshape(shape);
}

int64_t scaled(int64_t width, int64_t scale, int64_t floor) {
  return std::max<int64_t>(floor, width / std::max<int64_t>(1, scale));
}

torch::Tensor canonical_order(const torch::Tensor& rows) {
  auto r = rows.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const int64_t n = r.size(0);
  const int64_t d = r.size(1);
  const double* data = r.data_ptr<double>();
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return std::lexicographical_compare(data + a * d, data + (a + 1) * d, data + b * d,
                                        data + (b + 1) * d);
  });
  return torch::tensor(order, torch::kInt64);
}

torch::Tensor invert_permutation(const torch::Tensor& perm) {
  auto inv = torch::empty_like(perm);
  inv.index_put_({perm}, torch::arange(perm.size(0), perm.options()));
  return inv;
}

}  // namespace gtrack::nn

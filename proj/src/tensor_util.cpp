#include "gtrack/tensor_util.hpp"

namespace gtrack {

torch::Tensor to_tensor(const PointMatrix& points) {
  if (points.rows() == 0) {
    return torch::zeros({0, 3}, torch::kFloat32);
  }
  return torch::from_blob(const_cast<float*>(points.data()), {points.rows(), 3}, torch::kFloat32)
      .clone();
}

torch::Tensor to_tensor(const FaceMatrix& faces) {
  if (faces.rows() == 0) {
    return torch::zeros({0, 3}, torch::kInt32);
  }
  return torch::from_blob(const_cast<int32_t*>(faces.data()), {faces.rows(), 3}, torch::kInt32)
      .clone();
}

PointMatrix to_points(const torch::Tensor& tensor) {
  TORCH_CHECK(tensor.dim() == 2 && tensor.size(1) == 3, "expected [N,3] tensor, got ",
              tensor.sizes());
  auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  PointMatrix out(t.size(0), 3);
  if (t.size(0) > 0) {
    std::memcpy(out.data(), t.data_ptr<float>(), sizeof(float) * t.numel());
  }
  return out;
}

}  // namespace gtrack

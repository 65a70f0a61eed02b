#pragma once

#include <torch/torch.h>

#include "gtrack/types.hpp"

namespace gtrack {

/// Copies an N×3 block into a new float32 tensor of shape [N, 3].
torch::Tensor to_tensor(const PointMatrix& points);
torch::Tensor to_tensor(const FaceMatrix& faces);

/// Copies a [N, 3] tensor of any floating dtype into an N×3 float block.
PointMatrix to_points(const torch::Tensor& tensor);

}  // namespace gtrack

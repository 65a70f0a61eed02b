#pragma once

// Normalized Object Coordinate Space helpers: binning for the per-axis
// classification heads, and the perturbation models used for training
// augmentation and first-frame robustness runs.

#include <array>
#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "gtrack/types.hpp"

namespace gtrack::nocs {

inline constexpr int kDefaultBins = 64;

/// Per-component bin index min(floor(c * bins), bins - 1). Throws InputError on
/// non-finite input or bins < 2. Coordinates are clamped to [0,1] first.
BinMatrix to_bins(const PointMatrix& coords, int bins = kDefaultBins);

/// Tensor form of to_bins: [..., 3] floating -> [..., 3] int64.
torch::Tensor to_bins(const torch::Tensor& coords, int bins = kDefaultBins);

/// Decodes [..., 3, B] logits to bin-center coordinates (argmax + 0.5) / B.
/// Ties resolve to the lowest bin index.
torch::Tensor decode(const torch::Tensor& logits);

/// decode() for a single [N, 3, B] logit block.
PointMatrix bins_to_nocs(const torch::Tensor& logits);

/// [N, 3, B] logits with `hot` at the given bins and zero elsewhere.
torch::Tensor one_hot_logits(const BinMatrix& bins, int num_bins, float hot = 1.0F);

/// Clamps every component into [0,1] in place.
void clamp_unit(PointMatrix& coords);

enum class NoiseLevel : int { k1x = 1, k2x = 2, k3x = 3 };

std::string to_string(NoiseLevel level);
NoiseLevel parse_noise_level(const std::string& text);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};
using Range3 = std::array<Range, 3>;

inline Range3 uniform3(double lo, double hi) { return {Range{lo, hi}, Range{lo, hi}, Range{lo, hi}}; }

struct NoiseParams {
  Range3 s_pc = uniform3(1.0, 1.0);
  Range3 o_pc = uniform3(0.0, 0.0);
  double delta = 0.0;
  Range3 s_mesh = uniform3(1.0, 1.0);
  NoiseLevel level = NoiseLevel::k1x;

  /// The exact row of the robustness noise table for `level`.
  static NoiseParams for_level(NoiseLevel level);
  /// Scale 1, offset 0, no Gaussian term.
  static NoiseParams identity();

  void validate() const;
};

/// Global transform drawn by perturb_nocs, exposed so callers can reproduce it.
struct PcPerturbation {
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> offset{0.0, 0.0, 0.0};
};

/// clamp(c * s + o + eps, 0, 1) with s, o drawn once per call and eps drawn per
/// point-component. Bit-identical for equal seeds.
PointMatrix perturb_nocs(const PointMatrix& coords, const NoiseParams& params, uint64_t seed,
                         PcPerturbation* drawn = nullptr);

/// Scales vertices about (0.5, 0.5, 0.5) by one per-axis factor drawn from
/// `s_mesh`, then clamps to the unit cube.
CanonicalMesh perturb_mesh(const CanonicalMesh& mesh, const Range3& s_mesh, uint64_t seed,
                           std::array<double, 3>* drawn_scale = nullptr);

/// Applies v' = clamp(v * scale + offset, 0, 1) per axis.
PointMatrix apply_scale_offset(const PointMatrix& coords, const std::array<double, 3>& scale,
                               const std::array<double, 3>& offset);

}  // namespace gtrack::nocs

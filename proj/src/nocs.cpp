#include "gtrack/nocs.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gtrack::nocs {

namespace {

void check_bins(int bins) {
  if (bins < 2) {
    throw InputError("bin count must be at least 2, got " + std::to_string(bins));
  }
}

void check_range(const Range& r, const char* what) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw InputError(std::string("empty or non-finite range for ") + what);
  }
}

double draw(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) {
    return r.lo;
  }
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

BinMatrix to_bins(const PointMatrix& coords, int bins) {
  check_bins(bins);
  BinMatrix out(coords.rows(), 3);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const float c = coords(i, a);
      if (!std::isfinite(c)) {
        throw InputError("non-finite NOCS coordinate at row " + std::to_string(i));
      }
      const double scaled = std::floor(static_cast<double>(std::clamp(c, 0.0F, 1.0F)) * bins);
      out(i, a) = static_cast<int32_t>(std::min<double>(scaled, bins - 1));
    }
  }
  return out;
}

torch::Tensor to_bins(const torch::Tensor& coords, int bins) {
  check_bins(bins);
  if (!torch::isfinite(coords).all().item<bool>()) {
    throw InputError("non-finite NOCS coordinate");
  }
  auto scaled = torch::floor(coords.to(torch::kFloat64).clamp(0.0, 1.0) * bins);
  return scaled.clamp_max(bins - 1).to(torch::kInt64);
}

torch::Tensor decode(const torch::Tensor& logits) {
  TORCH_CHECK(logits.dim() >= 2 && logits.size(-2) == 3, "expected [...,3,B] logits, got ",
              logits.sizes());
  const auto bins = logits.size(-1);
  check_bins(static_cast<int>(bins));
  // torch::argmax returns the first maximal index.
  auto idx = logits.detach().argmax(-1).to(torch::kFloat32);
  return (idx + 0.5F) / static_cast<float>(bins);
}

PointMatrix bins_to_nocs(const torch::Tensor& logits) {
  TORCH_CHECK(logits.dim() == 3, "expected [N,3,B] logits, got ", logits.sizes());
  if (!torch::isfinite(logits).all().item<bool>()) {
    throw InputError("non-finite logits");
  }
  PointMatrix out(logits.size(0), 3);
  if (logits.size(0) == 0) {
    return out;
  }
  auto coords = decode(logits).contiguous();
  std::memcpy(out.data(), coords.data_ptr<float>(), sizeof(float) * coords.numel());
  return out;
}

torch::Tensor one_hot_logits(const BinMatrix& bins, int num_bins, float hot) {
  check_bins(num_bins);
  auto logits = torch::zeros({bins.rows(), 3, num_bins}, torch::kFloat32);
  auto acc = logits.accessor<float, 3>();
  for (Eigen::Index i = 0; i < bins.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      acc[i][a][bins(i, a)] = hot;
    }
  }
  return logits;
}

void clamp_unit(PointMatrix& coords) { coords = coords.cwiseMax(0.0F).cwiseMin(1.0F); }

std::string to_string(NoiseLevel level) {
  return std::to_string(static_cast<int>(level)) + "x";
}

NoiseLevel parse_noise_level(const std::string& text) {
  if (text == "1x") return NoiseLevel::k1x;
  if (text == "2x") return NoiseLevel::k2x;
  if (text == "3x") return NoiseLevel::k3x;
  throw InputError("unknown noise level '" + text + "' (expected 1x, 2x or 3x)");
}

NoiseParams NoiseParams::for_level(NoiseLevel level) {
  NoiseParams p;
  p.level = level;
  switch (level) {
    case NoiseLevel::k1x:
      p.s_pc = uniform3(0.8, 1.2);
      p.o_pc = uniform3(0.0, 0.1);
      p.delta = 0.05;
      p.s_mesh = uniform3(0.8, 1.2);
      break;
    case NoiseLevel::k2x:
      p.s_pc = uniform3(0.6, 1.4);
      p.o_pc = uniform3(0.0, 0.2);
      p.delta = 0.10;
      p.s_mesh = uniform3(0.6, 1.4);
      break;
    case NoiseLevel::k3x:
      p.s_pc = uniform3(0.4, 1.6);
      p.o_pc = uniform3(0.0, 0.3);
      p.delta = 0.15;
      p.s_mesh = uniform3(0.4, 1.6);
      break;
  }
  return p;
}

NoiseParams NoiseParams::identity() { return NoiseParams{}; }

void NoiseParams::validate() const {
  for (int a = 0; a < 3; ++a) {
    check_range(s_pc[a], "s_pc");
    check_range(o_pc[a], "o_pc");
    check_range(s_mesh[a], "s_mesh");
  }
  if (!std::isfinite(delta) || delta < 0.0) {
    throw InputError("delta must be finite and non-negative");
  }
}

PointMatrix perturb_nocs(const PointMatrix& coords, const NoiseParams& params, uint64_t seed,
                         PcPerturbation* drawn) {
  params.validate();
  std::mt19937_64 rng(seed);
  PcPerturbation t;
  for (int a = 0; a < 3; ++a) t.scale[a] = draw(rng, params.s_pc[a]);
  for (int a = 0; a < 3; ++a) t.offset[a] = draw(rng, params.o_pc[a]);

  PointMatrix out(coords.rows(), 3);
  std::normal_distribution<double> gauss(0.0, params.delta > 0.0 ? params.delta : 1.0);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      double v = static_cast<double>(coords(i, a)) * t.scale[a] + t.offset[a];
      if (params.delta > 0.0) {
        v += gauss(rng);
      }
      out(i, a) = clamp01(v);
    }
  }
  if (drawn != nullptr) {
    *drawn = t;
  }
  return out;
}

CanonicalMesh perturb_mesh(const CanonicalMesh& mesh, const Range3& s_mesh, uint64_t seed,
                           std::array<double, 3>* drawn_scale) {
  for (const auto& r : s_mesh) check_range(r, "s_mesh");
  std::mt19937_64 rng(seed);
  std::array<double, 3> s{};
  for (int a = 0; a < 3; ++a) s[a] = draw(rng, s_mesh[a]);

  CanonicalMesh out;
  out.faces = mesh.faces;
  out.vertices.resize(mesh.vertices.rows(), 3);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      out.vertices(i, a) = clamp01(0.5 + (static_cast<double>(mesh.vertices(i, a)) - 0.5) * s[a]);
    }
  }
  if (drawn_scale != nullptr) {
    *drawn_scale = s;
  }
  return out;
}

PointMatrix apply_scale_offset(const PointMatrix& coords, const std::array<double, 3>& scale,
                               const std::array<double, 3>& offset) {
  PointMatrix out(coords.rows(), 3);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      out(i, a) = clamp01(static_cast<double>(coords(i, a)) * scale[a] + offset[a]);
    }
  }
  return out;
}

}  // namespace gtrack::nocs

#include "gtrack/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gtrack/nn.hpp"

namespace gtrack {

namespace {

constexpr int64_t kBias = int64_t{1} << 17;

uint64_t pack(int64_t b, int64_t x, int64_t y, int64_t z) {
  return (static_cast<uint64_t>(b) << 54) | (static_cast<uint64_t>(x + kBias) << 36) |
         (static_cast<uint64_t>(y + kBias) << 18) | static_cast<uint64_t>(z + kBias);
}

struct Level {
  std::vector<std::array<int64_t, 4>> coords;
  std::unordered_map<uint64_t, int64_t> index;

  void finalize() {
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    index.reserve(coords.size() * 2);
    for (size_t i = 0; i < coords.size(); ++i) {
      const auto& c = coords[i];
      index.emplace(pack(c[0], c[1], c[2], c[3]), static_cast<int64_t>(i));
    }
  }

  [[nodiscard]] int64_t find(int64_t b, int64_t x, int64_t y, int64_t z) const {
    auto it = index.find(pack(b, x, y, z));
    return it == index.end() ? -1 : it->second;
  }
};

torch::Tensor to_tensor(const std::vector<int64_t>& v, int64_t rows, int64_t cols) {
  return torch::from_blob(const_cast<int64_t*>(v.data()), {rows, cols}, torch::kInt64).clone();
}

int64_t floor_div2(int64_t v) { return v >> 1; }  // arithmetic shift floors negatives

}  // namespace

torch::Tensor canonical_centroid(const torch::Tensor& points) {
  TORCH_CHECK(points.dim() == 3 && points.size(2) == 3, "expected [B,N,3] points");
  auto pts = points.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const int64_t B = pts.size(0);
  const int64_t N = pts.size(1);
  auto out = torch::zeros({B, 3}, torch::kFloat64);
  for (int64_t b = 0; b < B; ++b) {
    auto order = nn::canonical_order(pts[b]);
    auto sorted = pts[b].index_select(0, order).contiguous();
    const double* d = sorted.data_ptr<double>();
    double s[3] = {0.0, 0.0, 0.0};
    for (int64_t i = 0; i < N; ++i) {
      for (int a = 0; a < 3; ++a) s[a] += d[i * 3 + a];
    }
    for (int a = 0; a < 3; ++a) out[b][a] = s[a] / static_cast<double>(std::max<int64_t>(N, 1));
  }
  return out.to(points.dtype());
}

VoxelHierarchy build_hierarchy(const torch::Tensor& centered_points, double voxel_size, int levels) {
  TORCH_CHECK(levels >= 1, "need at least one level");
  auto pts = centered_points.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const int64_t B = pts.size(0);
  const int64_t N = pts.size(1);
  const double* p = pts.data_ptr<double>();

  std::vector<Level> lv(levels);
  std::vector<std::array<int64_t, 4>> point_voxel(B * N);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < N; ++i) {
      const double* q = p + (b * N + i) * 3;
      std::array<int64_t, 4> c{b, static_cast<int64_t>(std::floor(q[0] / voxel_size)),
                               static_cast<int64_t>(std::floor(q[1] / voxel_size)),
                               static_cast<int64_t>(std::floor(q[2] / voxel_size))};
      point_voxel[b * N + i] = c;
      lv[0].coords.push_back(c);
    }
  }
  lv[0].finalize();
  for (int l = 1; l < levels; ++l) {
    for (const auto& c : lv[l - 1].coords) {
      lv[l].coords.push_back({c[0], floor_div2(c[1]), floor_div2(c[2]), floor_div2(c[3])});
    }
    lv[l].finalize();
  }

  VoxelHierarchy h;
  std::vector<int64_t> p2v(B * N);
  for (int64_t i = 0; i < B * N; ++i) {
    const auto& c = point_voxel[i];
    p2v[i] = lv[0].find(c[0], c[1], c[2], c[3]);
  }
  h.point_to_voxel = torch::tensor(p2v, torch::kInt64);

  for (int l = 0; l < levels; ++l) {
    const auto& L = lv[l];
    const auto V = static_cast<int64_t>(L.coords.size());
    std::vector<int64_t> flat;
    flat.reserve(V * 4);
    for (const auto& c : L.coords) flat.insert(flat.end(), c.begin(), c.end());
    h.coords.push_back(to_tensor(flat, V, 4));

    std::vector<int64_t> nbr(V * 27);
    for (int64_t v = 0; v < V; ++v) {
      const auto& c = L.coords[v];
      int k = 0;
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) nbr[v * 27 + k++] = L.find(c[0], c[1] + dx, c[2] + dy, c[3] + dz);
    }
    h.submanifold.push_back(to_tensor(nbr, V, 27));

    if (l + 1 < levels) {
      const auto& C = lv[l + 1];
      const auto Vc = static_cast<int64_t>(C.coords.size());
      std::vector<int64_t> down(Vc * 8);
      for (int64_t v = 0; v < Vc; ++v) {
        const auto& c = C.coords[v];
        int k = 0;
        for (int dx = 0; dx <= 1; ++dx)
          for (int dy = 0; dy <= 1; ++dy)
            for (int dz = 0; dz <= 1; ++dz)
              down[v * 8 + k++] = L.find(c[0], 2 * c[1] + dx, 2 * c[2] + dy, 2 * c[3] + dz);
      }
      h.down.push_back(to_tensor(down, Vc, 8));

      std::vector<int64_t> up(V * 8, -1);
      for (int64_t v = 0; v < V; ++v) {
        const auto& c = L.coords[v];
        const int64_t px = floor_div2(c[1]);
        const int64_t py = floor_div2(c[2]);
        const int64_t pz = floor_div2(c[3]);
        const int slot = static_cast<int>((c[1] - 2 * px) * 4 + (c[2] - 2 * py) * 2 + (c[3] - 2 * pz));
        up[v * 8 + slot] = C.find(c[0], px, py, pz);
      }
      h.up.push_back(to_tensor(up, V, 8));
    }
  }
  return h;
}

SparseConvImpl::SparseConvImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_volume)
    : in_(in_channels), kernel_(kernel_volume) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel_volume));
  weight_ = register_parameter(
      "weight", torch::empty({kernel_volume * in_channels, out_channels}).uniform_(-bound, bound));
  bias_ = register_parameter("bias", torch::empty({out_channels}).uniform_(-bound, bound));
}

torch::Tensor SparseConvImpl::forward(const torch::Tensor& x, const torch::Tensor& neighbors) {
  TORCH_CHECK(neighbors.size(1) == kernel_, "kernel map width mismatch");
  // Missing neighbors point at an appended zero row.
  auto padded = torch::cat({x, torch::zeros({1, in_}, x.options())}, 0);
  auto idx = torch::where(neighbors < 0, torch::full_like(neighbors, x.size(0)), neighbors);
  auto gathered = padded.index_select(0, idx.reshape({-1})).reshape({neighbors.size(0), kernel_ * in_});
  return torch::addmm(bias_, gathered, weight_);
}

SparseResBlockImpl::SparseResBlockImpl(int64_t channels) {
  conv1_ = register_module("conv1", SparseConv(channels, channels, 27));
  conv2_ = register_module("conv2", SparseConv(channels, channels, 27));
}

torch::Tensor SparseResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& neighbors) {
  auto h = torch::relu(conv1_->forward(x, neighbors));
  h = conv2_->forward(h, neighbors);
  return torch::relu(h + x);
}

PointEncoderImpl::PointEncoderImpl(EncoderConfig config) : config_(std::move(config)) {
  const auto& enc = config_.encoder_channels;
  const auto& dec = config_.decoder_channels;
  TORCH_CHECK(enc.size() == dec.size() && enc.size() >= 2,
              "encoder and decoder channel lists must have equal length >= 2");
  const size_t levels = enc.size();
  stem_ = register_module("stem", SparseConv(1, enc[0], 27));
  for (size_t l = 0; l < levels; ++l) {
    if (l > 0) {
      downs_.push_back(register_module("down" + std::to_string(l), SparseConv(enc[l - 1], enc[l], 8)));
    }
    blocks_.push_back(register_module("block" + std::to_string(l), SparseResBlock(enc[l])));
  }
  // Up path: level l+1 -> l. The deepest input is the bottleneck; shallower
  // ones also carry the skip features concatenated at level l+1.
  for (size_t l = levels - 1; l >= 1; --l) {
    const int64_t in = (l == levels - 1) ? enc[l] : dec[l + 1] + enc[l];
    ups_.push_back(register_module("up" + std::to_string(l), SparseConv(in, dec[l], 8)));
  }
  head_ = register_module("head", torch::nn::Linear(dec[1] + enc[0], dec[0]));
}

torch::Tensor PointEncoderImpl::forward(const torch::Tensor& points) {
  TORCH_CHECK(points.dim() == 3 && points.size(2) == 3, "expected [B,N,3] points, got ",
              points.sizes());
  TORCH_CHECK(points.size(1) > 0, "cannot encode an empty cloud");
  const int64_t B = points.size(0);
  const int64_t N = points.size(1);
  const auto levels = static_cast<int>(config_.encoder_channels.size());
  auto centered = points - canonical_centroid(points).unsqueeze(1);
  const auto h = build_hierarchy(centered, config_.voxel_size, levels);

  const auto opts = points.options();
  auto x = torch::ones({h.coords[0].size(0), 1}, opts);
  x = torch::relu(stem_->forward(x, h.submanifold[0]));
  std::vector<torch::Tensor> skips;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      x = torch::relu(downs_[l - 1]->forward(x, h.down[l - 1]));
    }
    x = blocks_[l]->forward(x, h.submanifold[l]);
    skips.push_back(x);
  }
  for (int l = levels - 1, u = 0; l >= 1; --l, ++u) {
    x = torch::relu(ups_[u]->forward(x, h.up[l - 1]));
    x = torch::cat({x, skips[l - 1]}, 1);
  }
  auto voxel_features = head_->forward(x);
  return voxel_features.index_select(0, h.point_to_voxel).reshape({B, N, -1});
}

}  // namespace gtrack

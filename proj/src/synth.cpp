#include "gtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

#include "gtrack/geometry.hpp"

namespace gtrack {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCreaseEps = 1e-5;

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

struct Lattice {
  int width;   // cells along x
  int height;  // cells along y
  std::function<bool(int, int)> keep_cell;
  std::function<double(int, int)> x_squeeze = [](int, int) { return 1.0; };
};

CanonicalMesh build_lattice(const Lattice& lat) {
  const double scale = 0.8 / std::max(lat.width, lat.height);
  std::map<std::pair<int, int>, int32_t> index;  // (j, i) -> vertex, row-major order
  for (int j = 0; j < lat.height; ++j) {
    for (int i = 0; i < lat.width; ++i) {
      if (!lat.keep_cell(i, j)) continue;
      for (auto [di, dj] : {std::pair{0, 0}, {1, 0}, {1, 1}, {0, 1}}) {
        index.emplace(std::pair{j + dj, i + di}, 0);
      }
    }
  }
  CanonicalMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(index.size()), 3);
  int32_t next = 0;
  for (auto& [key, id] : index) {
    id = next;
    const auto [j, i] = key;
    const double x = 0.5 + (i - 0.5 * lat.width) * scale * lat.x_squeeze(i, j);
    const double y = 0.5 + (j - 0.5 * lat.height) * scale;
    const double bulge = (x - 0.5) / 0.4;
    const double z = 0.5 + 0.03 * (1.0 - bulge * bulge);
    mesh.vertices.row(next) << static_cast<float>(x), static_cast<float>(y), static_cast<float>(z);
    ++next;
  }
  std::vector<std::array<int32_t, 3>> faces;
  for (int j = 0; j < lat.height; ++j) {
    for (int i = 0; i < lat.width; ++i) {
      if (!lat.keep_cell(i, j)) continue;
      const int32_t a = index.at({j, i});
      const int32_t b = index.at({j, i + 1});
      const int32_t c = index.at({j + 1, i + 1});
      const int32_t d = index.at({j + 1, i});
      faces.push_back({a, b, c});
      faces.push_back({a, c, d});
    }
  }
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f) {
    mesh.faces.row(static_cast<Eigen::Index>(f)) << faces[f][0], faces[f][1], faces[f][2];
  }
  return mesh;
}

Lattice lattice_for(Category category, int r) {
  switch (category) {
    case Category::kShirt:
      return {3 * r, 2 * r, [r](int i, int j) { return (i >= r && i < 2 * r) || j >= r; }};
    case Category::kPants:
      return {2 * r, 2 * r, [r](int i, int j) { return j >= r || i < r - 1 || i >= r + 1; }};
    case Category::kTop: {
      const int h = r / 2;
      return {2 * r, 2 * r, [r, h](int i, int j) { return j < r || i < h || i >= 2 * r - h; }};
    }
    case Category::kSkirt: {
      Lattice lat{2 * r, r, [](int, int) { return true; }};
      lat.x_squeeze = [r](int, int j) { return 1.0 - 0.4 * static_cast<double>(j) / r; };
      return lat;
    }
  }
  throw InputError("unknown category");
}

/// Rotates the local point (d, z) about an axis at height h by angle theta.
std::pair<double, double> fold_about_crease(double d, double z, double h, double theta) {
  const double dz = z - h;
  return {d * std::cos(theta) - dz * std::sin(theta), h + d * std::sin(theta) + dz * std::cos(theta)};
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::kShirt: return "Shirt";
    case Category::kPants: return "Pants";
    case Category::kTop: return "Top";
    case Category::kSkirt: return "Skirt";
  }
  return "?";
}

std::string to_string(Script s) {
  switch (s) {
    case Script::kFoldLR: return "fold_lr";
    case Script::kFoldUD: return "fold_ud";
    case Script::kCrumpleLift: return "crumple_lift";
    case Script::kFlingFlatten: return "fling_flatten";
  }
  return "?";
}

Category parse_category(const std::string& text) {
  for (auto c : {Category::kShirt, Category::kPants, Category::kTop, Category::kSkirt}) {
    if (to_string(c) == text) return c;
  }
  throw InputError("unknown garment category '" + text + "'");
}

Script parse_script(const std::string& text) {
  for (auto s : {Script::kFoldLR, Script::kFoldUD, Script::kCrumpleLift, Script::kFlingFlatten}) {
    if (to_string(s) == text) return s;
  }
  throw InputError("unknown script '" + text + "'");
}

bool is_folding(Script s) { return s == Script::kFoldLR || s == Script::kFoldUD; }

TemplateCounts template_counts(Category category, int r) {
  const int64_t R = r;
  const int64_t h = R / 2;
  switch (category) {
    case Category::kShirt: return {(R + 1) * (4 * R + 1), 8 * R * R};
    case Category::kPants: return {(2 * R + 1) * (R + 1) + 2 * R * R, 8 * R * R - 4 * R};
    case Category::kTop: return {(2 * R + 1) * (R + 1) + 2 * (h + 1) * R, 4 * R * R + 4 * h * R};
    case Category::kSkirt: return {(2 * R + 1) * (R + 1), 4 * R * R};
  }
  throw InputError("unknown category");
}

CanonicalMesh make_template(Category category, int resolution) {
  if (resolution < 4) {
    throw InputError("template resolution must be at least 4");
  }
  return build_lattice(lattice_for(category, resolution));
}

CanonicalMesh vary_instance(const CanonicalMesh& mesh, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> beta(-0.3, 0.3);
  const double bx = beta(rng);
  const double by = beta(rng);
  CanonicalMesh out = mesh;
  for (int axis = 0; axis < 2; ++axis) {
    const double b = axis == 0 ? bx : by;
    const double lo = mesh.vertices.col(axis).minCoeff();
    const double hi = mesh.vertices.col(axis).maxCoeff();
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
      // s in [-1, 1]; warp(s) = s + b sin(pi s)/pi is odd and monotone for |b| < 1.
      const double s = (mesh.vertices(v, axis) - center) / half;
      const double warped = s + b * std::sin(kPi * s) / kPi;
      out.vertices(v, axis) = static_cast<float>(center + half * warped);
    }
  }
  return out;
}

bool SequenceDataset::operator==(const SequenceDataset& other) const {
  return category == other.category && frames == other.frames &&
         canonical_mesh == other.canonical_mesh && manifest.seq_id == other.manifest.seq_id &&
         manifest.instance_id == other.manifest.instance_id &&
         manifest.script == other.manifest.script && manifest.seed == other.manifest.seed &&
         manifest.camera_count == other.manifest.camera_count &&
         manifest.frame_rate == other.manifest.frame_rate;
}

std::vector<PointMatrix> animate(const CanonicalMesh& mesh, Script script, int frames,
                                 uint64_t seed, const GeneratorOptions& options) {
  if (frames < 2) {
    throw InputError("a sequence needs at least 2 frames");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double yaw = (2.0 * uni(rng) - 1.0) * options.max_yaw_deg * kPi / 180.0;
  const double shift_x = (2.0 * uni(rng) - 1.0) * options.max_shift_m;
  const double shift_y = (2.0 * uni(rng) - 1.0) * options.max_shift_m;

  const Eigen::Index nv = mesh.vertices.rows();
  const double S = options.meters_per_nocs;
  Eigen::MatrixX3d flat(nv, 3);
  for (Eigen::Index v = 0; v < nv; ++v) {
    flat(v, 0) = (mesh.vertices(v, 0) - 0.5) * S;
    flat(v, 1) = (mesh.vertices(v, 1) - 0.5) * S;
    flat(v, 2) = 0.0;
  }

  // Crumple field parameters, shared by the crumple and fling scripts.
  struct Bump {
    Eigen::Vector2d center;
    double height;
    double sigma;
  };
  std::uniform_int_distribution<Eigen::Index> pick_vertex(0, nv - 1);
  const Eigen::Vector2d grasp = flat.row(pick_vertex(rng)).head<2>().transpose();
  std::vector<Bump> bumps(6);
  for (auto& b : bumps) {
    b.center = flat.row(pick_vertex(rng)).head<2>().transpose();
    b.height = 0.02 + 0.04 * uni(rng);
    b.sigma = 0.04 + 0.06 * uni(rng);
  }
  auto crumple = [&](double amount) {
    Eigen::MatrixX3d out = flat;
    for (Eigen::Index v = 0; v < nv; ++v) {
      const Eigen::Vector2d xy = flat.row(v).head<2>().transpose();
      const double dg2 = (xy - grasp).squaredNorm();
      double z = 0.25 * std::exp(-dg2 / (2.0 * 0.12 * 0.12));
      for (const auto& b : bumps) {
        z += b.height * std::exp(-(xy - b.center).squaredNorm() / (2.0 * b.sigma * b.sigma));
      }
      const double pull = 0.35 * std::exp(-dg2 / (2.0 * 0.2 * 0.2));
      out(v, 0) += amount * pull * (grasp.x() - xy.x());
      out(v, 1) += amount * pull * (grasp.y() - xy.y());
      out(v, 2) = amount * z;
    }
    return out;
  };

  const double h = 0.5 * options.layer_offset_m;
  const Eigen::MatrixX3d crumpled = crumple(1.0);
  std::vector<PointMatrix> result;
  result.reserve(frames);
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  for (int t = 0; t < frames; ++t) {
    const double progress = smoothstep(static_cast<double>(t) / (frames - 1));
    Eigen::MatrixX3d local = flat;
    switch (script) {
      case Script::kFoldLR:
      case Script::kFoldUD: {
        const int axis = script == Script::kFoldLR ? 0 : 1;
        const double theta = kPi * progress;
        for (Eigen::Index v = 0; v < nv; ++v) {
          if (mesh.vertices(v, axis) <= 0.5 + kCreaseEps) continue;
          // The moving half swings over the crease line toward the fixed half.
          auto [d, z] = fold_about_crease(flat(v, axis), 0.0, h, theta);
          local(v, axis) = d;
          local(v, 2) = z;
        }
        break;
      }
      case Script::kCrumpleLift:
        local = crumple(progress);
        break;
      case Script::kFlingFlatten:
        local = (1.0 - progress) * crumpled + progress * flat;
        break;
    }
    PointMatrix placed(nv, 3);
    for (Eigen::Index v = 0; v < nv; ++v) {
      placed(v, 0) = static_cast<float>(c * local(v, 0) - s * local(v, 1) + shift_x);
      placed(v, 1) = static_cast<float>(s * local(v, 0) + c * local(v, 1) + shift_y);
      placed(v, 2) = static_cast<float>(local(v, 2));
    }
    result.push_back(std::move(placed));
  }
  return result;
}

SequenceDataset generate_sequence(const CanonicalMesh& mesh, Category category, Script script,
                                  int frames, uint64_t seed, const GeneratorOptions& options) {
  auto poses = animate(mesh, script, frames, seed, options);
  const auto cameras = camera_ring(options.cameras, 1.1F, 55.0F, Vec3(0.0F, 0.0F, 0.05F),
                                   options.raster_resolution);
  SequenceDataset ds;
  ds.category = category;
  ds.canonical_mesh = mesh;
  ds.manifest.script = to_string(script);
  ds.manifest.seed = seed;
  ds.manifest.camera_count = options.cameras;
  ds.manifest.frame_rate = options.frame_rate;
  ds.frames.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    auto rendered = render_partial(poses[t], mesh.faces, mesh.vertices, cameras,
                                   options.points_per_frame, seed * 1000003ULL + t);
    PointCloudFrame frame;
    frame.points = std::move(rendered.points);
    frame.gt_nocs = std::move(rendered.gt_nocs);
    frame.mesh_vertices_task = std::move(poses[t]);
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace gtrack

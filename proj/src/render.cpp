#include "gtrack/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gtrack/geometry.hpp"

namespace gtrack {

namespace {

constexpr float kNear = 0.01F;

struct Basis {
  Vec3 forward;
  Vec3 right;
  Vec3 down;
  float focal;
};

Basis basis_of(const Camera& cam) {
  Basis b;
  b.forward = (cam.target - cam.position).normalized();
  Vec3 up = cam.up;
  if (std::abs(b.forward.dot(up.normalized())) > 0.999F) {
    up = Vec3(0.0F, 1.0F, 0.0F);
  }
  b.right = b.forward.cross(up).normalized();
  b.down = b.forward.cross(b.right).normalized();
  const float half = 0.5F * cam.fov_deg * std::numbers::pi_v<float> / 180.0F;
  b.focal = 0.5F * static_cast<float>(cam.width) / std::tan(half);
  return b;
}

Camera::Projection project_with(const Camera& cam, const Basis& b, const Vec3& p) {
  const Vec3 rel = p - cam.position;
  Camera::Projection out;
  out.depth = rel.dot(b.forward);
  const float inv = out.depth != 0.0F ? 1.0F / out.depth : 0.0F;
  out.u = 0.5F * static_cast<float>(cam.width) + b.focal * rel.dot(b.right) * inv;
  out.v = 0.5F * static_cast<float>(cam.height) + b.focal * rel.dot(b.down) * inv;
  return out;
}

}  // namespace

Camera::Projection Camera::project(const Vec3& p) const { return project_with(*this, basis_of(*this), p); }

std::vector<Camera> camera_ring(int count, float distance, float elevation_deg, const Vec3& target,
                                int resolution) {
  if (count < 1) {
    throw InputError("camera count must be at least 1");
  }
  std::vector<Camera> cams;
  const float elev = elevation_deg * std::numbers::pi_v<float> / 180.0F;
  for (int k = 0; k < count; ++k) {
    const float az = std::numbers::pi_v<float> * (0.25F + 2.0F * static_cast<float>(k) / count);
    Camera c;
    c.target = target;
    c.position = target + distance * Vec3(std::cos(elev) * std::cos(az),
                                          std::cos(elev) * std::sin(az), std::sin(elev));
    c.width = resolution;
    c.height = resolution;
    cams.push_back(c);
  }
  return cams;
}

DepthBuffer rasterize(const PointMatrix& task_vertices, const FaceMatrix& faces,
                      const Camera& camera) {
  const Basis b = basis_of(camera);
  DepthBuffer buf;
  buf.width = camera.width;
  buf.height = camera.height;
  buf.depth.assign(static_cast<size_t>(buf.width) * buf.height,
                   std::numeric_limits<float>::infinity());
  buf.face.assign(buf.depth.size(), -1);

  std::vector<Camera::Projection> proj(task_vertices.rows());
  for (Eigen::Index i = 0; i < task_vertices.rows(); ++i) {
    proj[i] = project_with(camera, b, task_vertices.row(i).transpose());
  }

  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const auto& p0 = proj[faces(f, 0)];
    const auto& p1 = proj[faces(f, 1)];
    const auto& p2 = proj[faces(f, 2)];
    if (p0.depth < kNear || p1.depth < kNear || p2.depth < kNear) {
      continue;
    }
    const float area = (p1.u - p0.u) * (p2.v - p0.v) - (p1.v - p0.v) * (p2.u - p0.u);
    if (std::abs(area) < 1e-12F) {
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.u, p1.u, p2.u}))));
    const int x1 = std::min(buf.width - 1, static_cast<int>(std::ceil(std::max({p0.u, p1.u, p2.u}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.v, p1.v, p2.v}))));
    const int y1 = std::min(buf.height - 1, static_cast<int>(std::ceil(std::max({p0.v, p1.v, p2.v}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const float px = static_cast<float>(x) + 0.5F;
        const float py = static_cast<float>(y) + 0.5F;
        // Barycentric weights from signed sub-areas; both windings are drawn.
        const float w0 = ((p1.u - px) * (p2.v - py) - (p1.v - py) * (p2.u - px)) / area;
        const float w1 = ((p2.u - px) * (p0.v - py) - (p2.v - py) * (p0.u - px)) / area;
        const float w2 = 1.0F - w0 - w1;
        if (w0 < 0.0F || w1 < 0.0F || w2 < 0.0F) {
          continue;
        }
        const float inv_depth = w0 / p0.depth + w1 / p1.depth + w2 / p2.depth;
        const float depth = 1.0F / inv_depth;
        const size_t idx = static_cast<size_t>(y) * buf.width + x;
        if (depth < buf.depth[idx]) {
          buf.depth[idx] = depth;
          buf.face[idx] = static_cast<int32_t>(f);
        }
      }
    }
  }
  return buf;
}

namespace {

// Ray parameter where o + t d crosses triangle abc (Moller-Trumbore), or +inf.
float segment_hit(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Eigen::Vector3d dd = d.cast<double>();
  const Eigen::Vector3d e1 = (b - a).cast<double>();
  const Eigen::Vector3d e2 = (c - a).cast<double>();
  const Eigen::Vector3d p = dd.cross(e2);
  const double det = e1.dot(p);
  constexpr float kMiss = std::numeric_limits<float>::infinity();
  if (std::abs(det) < 1e-18) return kMiss;
  const Eigen::Vector3d s = (o - a).cast<double>();
  const double u = s.dot(p) / det;
  if (u < 0.0 || u > 1.0) return kMiss;
  const Eigen::Vector3d q = s.cross(e1);
  const double v = dd.dot(q) / det;
  if (v < 0.0 || u + v > 1.0) return kMiss;
  const double t = e2.dot(q) / det;
  return t > 0.0 ? static_cast<float>(t) : kMiss;
}

}  // namespace

RenderResult render_partial(const PointMatrix& task_vertices, const FaceMatrix& faces,
                            const PointMatrix& vertex_nocs, std::span<const Camera> cameras,
                            int samples, uint64_t seed, float occlusion_tolerance) {
  if (cameras.empty()) {
    throw InputError("render_partial needs at least one camera");
  }
  if (samples <= 0) {
    throw InputError("render_partial needs a positive sample count");
  }
  if (vertex_nocs.rows() != task_vertices.rows()) {
    throw AlignmentError("vertex NOCS and task vertices differ in count");
  }

  std::vector<DepthBuffer> buffers;
  std::vector<Basis> bases;
  bool any_coverage = false;
  for (const auto& cam : cameras) {
    buffers.push_back(rasterize(task_vertices, faces, cam));
    bases.push_back(basis_of(cam));
    any_coverage = any_coverage || std::any_of(buffers.back().face.begin(), buffers.back().face.end(),
                                               [](int32_t f) { return f >= 0; });
  }
  if (!any_coverage) {
    throw InputError("mesh lies outside every camera frustum");
  }

  std::vector<Vec3> normals(faces.rows());
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    normals[f] = face_normal(task_vertices, faces, f);
  }

  // Screen-space tiles listing every face whose projected bounding box
  // touches them; occlusion is decided by exact segment tests against the
  // faces of the tile under the projected point.
  constexpr int kTile = 8;
  struct TileIndex {
    int cols = 0;
    int rows = 0;
    std::vector<std::vector<int32_t>> faces;
  };
  std::vector<TileIndex> tiles(cameras.size());
  for (size_t c = 0; c < cameras.size(); ++c) {
    const Camera& cam = cameras[c];
    TileIndex& ti = tiles[c];
    ti.cols = (cam.width + kTile - 1) / kTile;
    ti.rows = (cam.height + kTile - 1) / kTile;
    ti.faces.assign(static_cast<size_t>(ti.cols) * ti.rows, {});
    std::vector<Camera::Projection> proj(task_vertices.rows());
    for (Eigen::Index i = 0; i < task_vertices.rows(); ++i) {
      proj[i] = project_with(cam, bases[c], task_vertices.row(i).transpose());
    }
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
      const auto& p0 = proj[faces(f, 0)];
      const auto& p1 = proj[faces(f, 1)];
      const auto& p2 = proj[faces(f, 2)];
      if (p0.depth < kNear || p1.depth < kNear || p2.depth < kNear) {
        continue;
      }
      const float umin = std::min({p0.u, p1.u, p2.u});
      const float umax = std::max({p0.u, p1.u, p2.u});
      const float vmin = std::min({p0.v, p1.v, p2.v});
      const float vmax = std::max({p0.v, p1.v, p2.v});
      if (umax < 0.0F || vmax < 0.0F || umin >= static_cast<float>(cam.width) ||
          vmin >= static_cast<float>(cam.height)) {
        continue;
      }
      const int tx0 = std::max(0, static_cast<int>(std::floor(umin - 1.0F)) / kTile);
      const int tx1 = std::min(ti.cols - 1, static_cast<int>(std::ceil(umax + 1.0F)) / kTile);
      const int ty0 = std::max(0, static_cast<int>(std::floor(vmin - 1.0F)) / kTile);
      const int ty1 = std::min(ti.rows - 1, static_cast<int>(std::ceil(vmax + 1.0F)) / kTile);
      for (int ty = ty0; ty <= ty1; ++ty) {
        for (int tx = tx0; tx <= tx1; ++tx) {
          ti.faces[static_cast<size_t>(ty) * ti.cols + tx].push_back(static_cast<int32_t>(f));
        }
      }
    }
  }

  auto visible_from = [&](size_t c, const Vec3& p, Eigen::Index face, int side) {
    const Camera& cam = cameras[c];
    const Vec3 ray = p - cam.position;
    if (static_cast<float>(side) * normals[face].dot(-ray) <= 0.0F) {
      return false;  // camera is behind this side of the surface
    }
    const auto pr = project_with(cam, bases[c], p);
    if (pr.depth < kNear || pr.u < 0.0F || pr.v < 0.0F || pr.u >= static_cast<float>(cam.width) ||
        pr.v >= static_cast<float>(cam.height)) {
      return false;
    }
    const TileIndex& ti = tiles[c];
    const int tx = std::min(ti.cols - 1, static_cast<int>(pr.u) / kTile);
    const int ty = std::min(ti.rows - 1, static_cast<int>(pr.v) / kTile);
    const float len = ray.norm();
    for (const int32_t occluder : ti.faces[static_cast<size_t>(ty) * ti.cols + tx]) {
      if (occluder == face) continue;
      const float t = segment_hit(cam.position, ray, task_vertices.row(faces(occluder, 0)),
                                  task_vertices.row(faces(occluder, 1)),
                                  task_vertices.row(faces(occluder, 2)));
      if (t < 1.0F && (1.0F - t) * len > occlusion_tolerance) {
        return false;
      }
    }
    return true;
  };

  // Rejection sampling: area-uniform candidates over (face, side), accepted
  // when any camera sees them. Accepted samples are uniform over visible area.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  RenderResult out;
  out.points.resize(samples, 3);
  out.gt_nocs.resize(samples, 3);
  out.face_ids.reserve(samples);
  out.sides.reserve(samples);

  int accepted = 0;
  int rounds = 0;
  const int batch = std::max(256, 2 * samples);
  while (accepted < samples) {
    if (++rounds > 200) {
      throw InputError("visible surface too small to draw the requested samples");
    }
    const auto cand = sample_surface(task_vertices, faces, batch, rng());
    std::uniform_int_distribution<int> coin(0, 1);
    for (Eigen::Index i = 0; i < cand.size() && accepted < samples; ++i) {
      const int side = coin(rng) == 0 ? 1 : -1;
      const auto f = cand.face_ids[i];
      const Vec3 p = cand.barycentric(i, 0) * task_vertices.row(faces(f, 0)) +
                     cand.barycentric(i, 1) * task_vertices.row(faces(f, 1)) +
                     cand.barycentric(i, 2) * task_vertices.row(faces(f, 2));
      bool seen = false;
      for (size_t c = 0; c < cameras.size() && !seen; ++c) {
        seen = visible_from(c, p, f, side);
      }
      if (!seen) {
        continue;
      }
      out.points.row(accepted) = p.transpose();
      out.gt_nocs.row(accepted) = cand.barycentric(i, 0) * vertex_nocs.row(faces(f, 0)) +
                                  cand.barycentric(i, 1) * vertex_nocs.row(faces(f, 1)) +
                                  cand.barycentric(i, 2) * vertex_nocs.row(faces(f, 2));
      out.face_ids.push_back(f);
      out.sides.push_back(static_cast<int8_t>(side));
      ++accepted;
    }
  }
  return out;
}

}  // namespace gtrack

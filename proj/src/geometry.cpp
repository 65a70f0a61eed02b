#include "gtrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gtrack {

bool PointCloudFrame::operator==(const PointCloudFrame& other) const {
  auto same = [](const PointMatrix& a, const PointMatrix& b) {
    return a.rows() == b.rows() && (a.rows() == 0 || a == b);
  };
  return same(points, other.points) && same(gt_nocs, other.gt_nocs) &&
         same(mesh_vertices_task, other.mesh_vertices_task);
}

Vec3 face_normal(const PointMatrix& vertices, const FaceMatrix& faces, Eigen::Index face) {
  const Vec3 a = vertices.row(faces(face, 0));
  const Vec3 b = vertices.row(faces(face, 1));
  const Vec3 c = vertices.row(faces(face, 2));
  return (b - a).cross(c - a);
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Eigen::Vector3d ab = (b - a).cast<double>();
  const Eigen::Vector3d ac = (c - a).cast<double>();
  return 0.5 * ab.cross(ac).norm();
}

SurfaceSamples sample_surface(const PointMatrix& vertices, const FaceMatrix& faces, int count,
                              uint64_t seed) {
  if (count <= 0) {
    throw InputError("sample count must be positive");
  }
  std::vector<double> cumulative(faces.rows());
  double total = 0.0;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    total += triangle_area(vertices.row(faces(f, 0)), vertices.row(faces(f, 1)),
                           vertices.row(faces(f, 2)));
    cumulative[f] = total;
  }
  if (!(total > 0.0)) {
    throw InputError("cannot sample a mesh with zero surface area");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SurfaceSamples out;
  out.face_ids.resize(count);
  out.barycentric.resize(count, 3);
  for (int i = 0; i < count; ++i) {
    const double pick = uni(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto face = std::min<std::ptrdiff_t>(it - cumulative.begin(), faces.rows() - 1);
    double r1 = std::sqrt(uni(rng));
    double r2 = uni(rng);
    out.face_ids[i] = static_cast<int32_t>(face);
    out.barycentric(i, 0) = static_cast<float>(1.0 - r1);
    out.barycentric(i, 1) = static_cast<float>(r1 * (1.0 - r2));
    out.barycentric(i, 2) = static_cast<float>(r1 * r2);
  }
  return out;
}

PointMatrix interpolate(const SurfaceSamples& samples, const PointMatrix& vertex_values,
                        const FaceMatrix& faces) {
  PointMatrix out(samples.size(), 3);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const auto f = samples.face_ids[i];
    out.row(i) = samples.barycentric(i, 0) * vertex_values.row(faces(f, 0)) +
                 samples.barycentric(i, 1) * vertex_values.row(faces(f, 1)) +
                 samples.barycentric(i, 2) * vertex_values.row(faces(f, 2));
  }
  return out;
}

double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  // Closest point by Voronoi region classification (Ericson, RTCD 5.1.5).
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

double point_mesh_distance(const Vec3& p, const PointMatrix& vertices, const FaceMatrix& faces) {
  double best = std::numeric_limits<double>::infinity();
  const Eigen::Vector3d pd = p.cast<double>();
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    best = std::min(best, point_triangle_distance(
                              pd, vertices.row(faces(f, 0)).transpose().cast<double>(),
                              vertices.row(faces(f, 1)).transpose().cast<double>(),
                              vertices.row(faces(f, 2)).transpose().cast<double>()));
  }
  return best;
}

std::vector<int64_t> resample_indices(Eigen::Index available, int count, uint64_t seed) {
  if (available <= 0 || count <= 0) {
    throw InputError("cannot resample from an empty set");
  }
  std::mt19937_64 rng(seed);
  std::vector<int64_t> all(available);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  if (count <= available) {
    all.resize(count);
    return all;
  }
  std::uniform_int_distribution<int64_t> pick(0, available - 1);
  while (static_cast<int>(all.size()) < count) {
    all.push_back(pick(rng));
  }
  return all;
}

PointMatrix gather_rows(const PointMatrix& m, const std::vector<int64_t>& rows) {
  PointMatrix out(static_cast<Eigen::Index>(rows.size()), 3);
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

}  // namespace gtrack

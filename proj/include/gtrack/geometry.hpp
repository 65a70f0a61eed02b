#pragma once

#include <cstdint>
#include <vector>

#include "gtrack/types.hpp"

namespace gtrack {

/// Points on a triangle mesh, stored as (face, barycentric) pairs so the same
/// sample set can be evaluated on any vertex attribute with the same topology.
struct SurfaceSamples {
  std::vector<int32_t> face_ids;
  PointMatrix barycentric;  // rows sum to 1

  [[nodiscard]] Eigen::Index size() const { return barycentric.rows(); }
};

/// Draws `count` points uniformly by area of the triangles spanned by
/// `vertices`. Degenerate meshes (zero total area) throw InputError.
SurfaceSamples sample_surface(const PointMatrix& vertices, const FaceMatrix& faces, int count,
                              uint64_t seed);

/// Evaluates a per-vertex attribute at each sample.
PointMatrix interpolate(const SurfaceSamples& samples, const PointMatrix& vertex_values,
                        const FaceMatrix& faces);

/// Unnormalized face normal (b - a) x (c - a).
Vec3 face_normal(const PointMatrix& vertices, const FaceMatrix& faces, Eigen::Index face);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Euclidean distance from p to triangle abc.
double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Brute-force distance from p to the closest face of a mesh.
double point_mesh_distance(const Vec3& p, const PointMatrix& vertices, const FaceMatrix& faces);

/// Picks `count` row indices from [0, available). Without replacement when
/// count <= available, otherwise every row once plus uniform repeats.
std::vector<int64_t> resample_indices(Eigen::Index available, int count, uint64_t seed);

PointMatrix gather_rows(const PointMatrix& m, const std::vector<int64_t>& rows);

}  // namespace gtrack

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gtrack/types.hpp"

namespace gtrack {

/// Pinhole depth camera looking from `position` toward `target`.
struct Camera {
  Vec3 position{0.0F, 0.0F, 1.0F};
  Vec3 target{0.0F, 0.0F, 0.0F};
  Vec3 up{0.0F, 0.0F, 1.0F};
  float fov_deg = 60.0F;
  int width = 160;
  int height = 160;

  struct Projection {
    float u = 0.0F;  // pixel coordinates, continuous
    float v = 0.0F;
    float depth = 0.0F;  // along the optical axis
  };

  [[nodiscard]] Projection project(const Vec3& p) const;
};

/// Cameras evenly spaced in azimuth around the table, all aimed at `target`.
std::vector<Camera> camera_ring(int count, float distance = 1.1F, float elevation_deg = 55.0F,
                                const Vec3& target = Vec3(0.0F, 0.0F, 0.05F), int resolution = 160);

struct RenderResult {
  PointMatrix points;
  PointMatrix gt_nocs;
  std::vector<int32_t> face_ids;
  /// +1 when the sample lies on the side the face normal points to, -1 for the back side.
  std::vector<int8_t> sides;
};

/// Samples `samples` points uniformly over the surface area visible from at
/// least one camera. Visibility of each candidate is decided against a
/// per-camera z-buffer of face ids; a candidate hidden behind another layer by
/// more than `occlusion_tolerance` meters is rejected. Throws InputError when
/// no face lands inside any camera frustum.
RenderResult render_partial(const PointMatrix& task_vertices, const FaceMatrix& faces,
                            const PointMatrix& vertex_nocs, std::span<const Camera> cameras,
                            int samples, uint64_t seed, float occlusion_tolerance = 5e-4F);

/// Face-id buffer for one camera (-1 where empty); exposed for tests.
struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<int32_t> face;

  [[nodiscard]] int32_t face_at(int x, int y) const { return face[y * width + x]; }
};

DepthBuffer rasterize(const PointMatrix& task_vertices, const FaceMatrix& faces,
                      const Camera& camera);

}  // namespace gtrack

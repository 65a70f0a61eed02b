#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gtrack {

/// N×3 row-major float block; the in-memory layout matches the on-disk
/// little-endian arrays and can be wrapped by a tensor without copying.
using PointMatrix = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FaceMatrix = Eigen::Matrix<int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using BinMatrix = Eigen::Matrix<int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3f;

/// Complete garment geometry in canonical space. Vertex positions are NOCS
/// coordinates in [0,1]^3. The surface may be open; nothing assumes closure.
struct CanonicalMesh {
  PointMatrix vertices;
  FaceMatrix faces;

  [[nodiscard]] Eigen::Index vertex_count() const { return vertices.rows(); }
  [[nodiscard]] Eigen::Index face_count() const { return faces.rows(); }

  bool operator==(const CanonicalMesh& other) const {
    return vertices.rows() == other.vertices.rows() && faces.rows() == other.faces.rows() &&
           vertices == other.vertices && faces == other.faces;
  }
};

/// One time step of a sequence.
struct PointCloudFrame {
  PointMatrix points;              // task space, meters
  PointMatrix gt_nocs;             // aligned with points; may be empty for real captures
  PointMatrix mesh_vertices_task;  // full ground-truth pose; may be empty

  bool operator==(const PointCloudFrame& other) const;
};

// Error taxonomy. The CLI maps these onto process exit codes.

/// Invalid argument values (non-finite coordinates, out-of-range sizes, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk data written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Point sets that should correspond row-by-row do not.
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gtrack

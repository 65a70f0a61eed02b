#pragma once

// Procedural stand-in for recorded garment manipulation: schematic category
// templates, scripted folds and crumples, and partial-view rendering.

#include <cstdint>
#include <string>
#include <vector>

#include "gtrack/render.hpp"
#include "gtrack/types.hpp"

namespace gtrack {

enum class Category { kShirt, kPants, kTop, kSkirt };
enum class Script { kFoldLR, kFoldUD, kCrumpleLift, kFlingFlatten };

std::string to_string(Category c);
std::string to_string(Script s);
Category parse_category(const std::string& text);
Script parse_script(const std::string& text);

/// Folding scripts start flat and end folded; the others are flattening-style.
bool is_folding(Script s);

/// Closed-form vertex/face counts of make_template. With h = floor(R/2):
///   Shirt  V = (R+1)(4R+1)            F = 8R^2
///   Pants  V = (2R+1)(R+1) + 2R^2     F = 8R^2 - 4R
///   Top    V = (2R+1)(R+1) + 2(h+1)R  F = 4R^2 + 4hR
///   Skirt  V = (2R+1)(R+1)            F = 4R^2
struct TemplateCounts {
  int64_t vertices;
  int64_t faces;
};
TemplateCounts template_counts(Category category, int resolution);

/// Flat grid mesh in the category silhouette, centered in the NOCS cube with a
/// 0.1 margin on the long axis and a mild z bulge. Requires resolution >= 4.
CanonicalMesh make_template(Category category, int resolution);

/// Per-instance proportions: a monotone, mirror-symmetric reparameterization
/// of x and y that keeps the bounding box and the x = 0.5 / y = 0.5 lines.
CanonicalMesh vary_instance(const CanonicalMesh& mesh, uint64_t seed);

struct GeneratorOptions {
  int cameras = 4;
  int points_per_frame = 4000;
  int raster_resolution = 160;
  double meters_per_nocs = 0.6;
  double layer_offset_m = 0.002;
  double max_yaw_deg = 15.0;
  double max_shift_m = 0.03;
  double frame_rate = 10.0;
};

struct SequenceManifest {
  std::string seq_id;
  int instance_id = 0;
  std::string script;
  uint64_t seed = 0;
  int camera_count = 0;
  double frame_rate = 10.0;
};

struct SequenceDataset {
  Category category = Category::kShirt;
  std::vector<PointCloudFrame> frames;
  CanonicalMesh canonical_mesh;
  SequenceManifest manifest;

  bool operator==(const SequenceDataset& other) const;
};

/// Rigid table placement and per-frame vertex positions for a script,
/// without rendering. Frame 0 of the folding and crumpling scripts is the flat
/// template on the table plane z = 0.
std::vector<PointMatrix> animate(const CanonicalMesh& mesh, Script script, int frames,
                                 uint64_t seed, const GeneratorOptions& options = {});

/// Animates, then renders every frame from a camera ring.
SequenceDataset generate_sequence(const CanonicalMesh& mesh, Category category, Script script,
                                  int frames, uint64_t seed, const GeneratorOptions& options = {});

}  // namespace gtrack

#pragma once

// On-disk container shared by datasets, first-frame poses and tracker output:
// a JSON manifest next to little-endian binary arrays. Each array file starts
// with a 20-byte header: magic "GTRK", u32 format version, u32 dtype
// (1 = f32, 2 = i32), u32 rows, u32 cols.

#include <cstdint>
#include <filesystem>
#include <string>

#include "gtrack/synth.hpp"
#include "gtrack/types.hpp"

namespace gtrack::io {

inline constexpr uint32_t kFormatVersion = 2;

void write_array(const std::filesystem::path& path, const PointMatrix& m);
void write_array(const std::filesystem::path& path, const FaceMatrix& m);
PointMatrix read_points(const std::filesystem::path& path);
FaceMatrix read_faces(const std::filesystem::path& path);

/// Raw 1-D float arrays (rows x 1) for auxiliary per-frame values.
void write_vector(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_vector(const std::filesystem::path& path);

/// `<root>/<category>/<seq_id>` for a dataset.
std::filesystem::path sequence_dir(const std::filesystem::path& root, const SequenceDataset& ds);

/// Writes manifest.json, canonical_mesh.{verts,faces}.bin and
/// frames/<t>.{points,nocs,mesh}.bin under `dir`.
void write_dataset(const SequenceDataset& ds, const std::filesystem::path& dir);

/// Throws FormatError on malformed manifests or truncated arrays and
/// VersionError when the manifest or an array header carries another version.
SequenceDataset read_dataset(const std::filesystem::path& dir);

/// Resolves a dataset root: explicit path, else $GT_DATA_ROOT, else fallback.
std::filesystem::path data_root(const std::string& explicit_root, const std::string& fallback);

}  // namespace gtrack::io

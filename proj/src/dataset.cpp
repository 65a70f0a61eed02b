#include "gtrack/dataset.hpp"

#include <array>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace gtrack::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; big-endian hosts need byte swapping");

namespace {

constexpr std::array<char, 4> kMagic{'G', 'T', 'R', 'K'};
constexpr uint32_t kDtypeF32 = 1;
constexpr uint32_t kDtypeI32 = 2;

struct Header {
  uint32_t version;
  uint32_t dtype;
  uint32_t rows;
  uint32_t cols;
};

void write_raw(const fs::path& path, uint32_t dtype, uint32_t rows, uint32_t cols,
               const void* data, size_t elem_size) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  const Header h{kFormatVersion, dtype, rows, cols};
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(elem_size * rows * cols));
  if (!out) {
    throw std::runtime_error("short write to " + path.string());
  }
}

std::vector<char> read_raw(const fs::path& path, uint32_t dtype, uint32_t expected_cols,
                           Header& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("missing array file " + path.string());
  }
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&header), sizeof(header));
  if (!in || magic != kMagic) {
    throw FormatError("bad magic header in " + path.string());
  }
  if (header.version != kFormatVersion) {
    throw VersionError("array " + path.string() + " has format version " +
                       std::to_string(header.version) + ", reader expects " +
                       std::to_string(kFormatVersion));
  }
  if (header.dtype != dtype) {
    throw FormatError("unexpected dtype in " + path.string());
  }
  if (expected_cols != 0 && header.cols != expected_cols) {
    throw FormatError("unexpected column count in " + path.string());
  }
  const size_t bytes = static_cast<size_t>(header.rows) * header.cols * 4;
  std::vector<char> data(bytes);
  in.read(data.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<size_t>(in.gcount()) != bytes) {
    throw FormatError("truncated array in " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes in " + path.string());
  }
  return data;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw FormatError(std::string("manifest is missing '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field '") + key + "': " + e.what());
  }
}

std::string frame_file(int t, const char* kind) {
  return std::to_string(t) + "." + kind + ".bin";
}

}  // namespace

void write_array(const fs::path& path, const PointMatrix& m) {
  write_raw(path, kDtypeF32, static_cast<uint32_t>(m.rows()), 3, m.data(), sizeof(float));
}

void write_array(const fs::path& path, const FaceMatrix& m) {
  write_raw(path, kDtypeI32, static_cast<uint32_t>(m.rows()), 3, m.data(), sizeof(int32_t));
}

PointMatrix read_points(const fs::path& path) {
  Header h{};
  auto data = read_raw(path, kDtypeF32, 3, h);
  PointMatrix m(h.rows, 3);
  if (!data.empty()) std::memcpy(m.data(), data.data(), data.size());
  return m;
}

FaceMatrix read_faces(const fs::path& path) {
  Header h{};
  auto data = read_raw(path, kDtypeI32, 3, h);
  FaceMatrix m(h.rows, 3);
  if (!data.empty()) std::memcpy(m.data(), data.data(), data.size());
  return m;
}

void write_vector(const fs::path& path, const std::vector<float>& values) {
  write_raw(path, kDtypeF32, static_cast<uint32_t>(values.size()), 1, values.data(), sizeof(float));
}

std::vector<float> read_vector(const fs::path& path) {
  Header h{};
  auto data = read_raw(path, kDtypeF32, 1, h);
  std::vector<float> v(h.rows);
  if (!data.empty()) std::memcpy(v.data(), data.data(), data.size());
  return v;
}

fs::path sequence_dir(const fs::path& root, const SequenceDataset& ds) {
  return root / to_string(ds.category) / ds.manifest.seq_id;
}

void write_dataset(const SequenceDataset& ds, const fs::path& dir) {
  if (ds.frames.size() < 2) {
    throw InputError("a dataset needs at least 2 frames");
  }
  fs::create_directories(dir / "frames");
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["category"] = to_string(ds.category);
  manifest["seq_id"] = ds.manifest.seq_id;
  manifest["instance_id"] = ds.manifest.instance_id;
  manifest["script"] = ds.manifest.script;
  manifest["seed"] = ds.manifest.seed;
  manifest["camera_count"] = ds.manifest.camera_count;
  manifest["frame_rate"] = ds.manifest.frame_rate;
  manifest["num_frames"] = ds.frames.size();
  manifest["vertex_count"] = ds.canonical_mesh.vertex_count();
  manifest["face_count"] = ds.canonical_mesh.face_count();
  json counts = json::array();
  for (const auto& f : ds.frames) counts.push_back(f.points.rows());
  manifest["point_counts"] = counts;
  manifest["dtypes"] = {{"verts", "f32le"}, {"faces", "i32le"}, {"points", "f32le"},
                        {"nocs", "f32le"},  {"mesh", "f32le"}};

  write_array(dir / "canonical_mesh.verts.bin", ds.canonical_mesh.vertices);
  write_array(dir / "canonical_mesh.faces.bin", ds.canonical_mesh.faces);
  for (size_t t = 0; t < ds.frames.size(); ++t) {
    const auto& f = ds.frames[t];
    if (f.mesh_vertices_task.rows() != ds.canonical_mesh.vertex_count()) {
      throw AlignmentError("frame " + std::to_string(t) + " vertex count differs from the mesh");
    }
    write_array(dir / "frames" / frame_file(static_cast<int>(t), "points"), f.points);
    write_array(dir / "frames" / frame_file(static_cast<int>(t), "nocs"), f.gt_nocs);
    write_array(dir / "frames" / frame_file(static_cast<int>(t), "mesh"), f.mesh_vertices_task);
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

SequenceDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) {
    throw FormatError("missing manifest in " + dir.string());
  }
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  const auto version = field<uint32_t>(manifest, "format_version");
  if (version != kFormatVersion) {
    throw VersionError("dataset " + dir.string() + " has format version " + std::to_string(version) +
                       ", reader expects " + std::to_string(kFormatVersion));
  }

  SequenceDataset ds;
  try {
    ds.category = parse_category(field<std::string>(manifest, "category"));
  } catch (const InputError& e) {
    throw FormatError(e.what());
  }
  ds.manifest.seq_id = field<std::string>(manifest, "seq_id");
  ds.manifest.instance_id = field<int>(manifest, "instance_id");
  ds.manifest.script = field<std::string>(manifest, "script");
  ds.manifest.seed = field<uint64_t>(manifest, "seed");
  ds.manifest.camera_count = field<int>(manifest, "camera_count");
  ds.manifest.frame_rate = field<double>(manifest, "frame_rate");
  const auto frames = field<size_t>(manifest, "num_frames");
  const auto vertex_count = field<int64_t>(manifest, "vertex_count");
  const auto face_count = field<int64_t>(manifest, "face_count");
  const auto point_counts = field<std::vector<int64_t>>(manifest, "point_counts");
  if (frames < 2 || point_counts.size() != frames) {
    throw FormatError("manifest frame count is inconsistent in " + dir.string());
  }

  ds.canonical_mesh.vertices = read_points(dir / "canonical_mesh.verts.bin");
  ds.canonical_mesh.faces = read_faces(dir / "canonical_mesh.faces.bin");
  if (ds.canonical_mesh.vertex_count() != vertex_count ||
      ds.canonical_mesh.face_count() != face_count) {
    throw FormatError("canonical mesh size disagrees with the manifest in " + dir.string());
  }
  if (ds.canonical_mesh.faces.size() > 0 &&
      (ds.canonical_mesh.faces.minCoeff() < 0 || ds.canonical_mesh.faces.maxCoeff() >= vertex_count)) {
    throw FormatError("face index out of range in " + dir.string());
  }
  ds.frames.resize(frames);
  for (size_t t = 0; t < frames; ++t) {
    auto& f = ds.frames[t];
    const auto base = dir / "frames";
    f.points = read_points(base / frame_file(static_cast<int>(t), "points"));
    f.gt_nocs = read_points(base / frame_file(static_cast<int>(t), "nocs"));
    f.mesh_vertices_task = read_points(base / frame_file(static_cast<int>(t), "mesh"));
    if (f.points.rows() != point_counts[t] || f.gt_nocs.rows() != point_counts[t] ||
        f.mesh_vertices_task.rows() != vertex_count) {
      throw FormatError("frame " + std::to_string(t) + " disagrees with the manifest in " +
                        dir.string());
    }
  }
  return ds;
}

fs::path data_root(const std::string& explicit_root, const std::string& fallback) {
  if (!explicit_root.empty()) {
    return explicit_root;
  }
  if (const char* env = std::getenv("GT_DATA_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return fallback;
}

}  // namespace gtrack::io

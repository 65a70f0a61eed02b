#include "gtrack/tracker.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gtrack/dataset.hpp"
#include "gtrack/geometry.hpp"
#include "gtrack/tensor_util.hpp"

namespace gtrack {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int default_refine_budget(Script script) { return is_folding(script) ? 1 : 15; }

std::string to_string(InitSource s) {
  switch (s) {
    case InitSource::kGroundTruth:
      return "ground_truth";
    case InitSource::kPerturbed:
      return "perturbed";
    case InitSource::kExternalFile:
      return "external_file";
  }
  return "?";
}

InitSource parse_init_source(const std::string& text) {
  if (text == "ground_truth") return InitSource::kGroundTruth;
  if (text == "perturbed") return InitSource::kPerturbed;
  if (text == "external_file") return InitSource::kExternalFile;
  throw InputError("unknown init source: " + text);
}

InitPose ground_truth_pose(const SequenceDataset& seq) {
  if (seq.frames.empty() || seq.frames.front().gt_nocs.rows() == 0) {
    throw InputError("ground-truth init needs labelled first-frame NOCS");
  }
  return {InitSource::kGroundTruth, seq.frames.front().points, seq.frames.front().gt_nocs,
          seq.canonical_mesh};
}

InitPose perturbed_pose(const SequenceDataset& seq, const nocs::NoiseParams& params, uint64_t seed) {
  InitPose pose = ground_truth_pose(seq);
  pose.source = InitSource::kPerturbed;
  pose.nocs = nocs::perturb_nocs(pose.nocs, params, seed);
  pose.mesh = nocs::perturb_mesh(pose.mesh, params.s_mesh, seed + 1);
  return pose;
}

void write_init_pose(const InitPose& pose, const fs::path& dir) {
  if (pose.points.rows() != pose.nocs.rows()) {
    throw AlignmentError("pose points and NOCS differ in length");
  }
  fs::create_directories(dir);
  json manifest;
  manifest["kind"] = "first_frame_pose";
  manifest["format_version"] = io::kFormatVersion;
  manifest["source"] = to_string(pose.source);
  manifest["points"] = pose.points.rows();
  manifest["mesh_vertices"] = pose.mesh.vertices.rows();
  manifest["mesh_faces"] = pose.mesh.faces.rows();
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  io::write_array(dir / "points.bin", pose.points);
  io::write_array(dir / "nocs.bin", pose.nocs);
  io::write_array(dir / "mesh_verts.bin", pose.mesh.vertices);
  io::write_array(dir / "mesh_faces.bin", pose.mesh.faces);
}

InitPose read_init_pose(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) {
    throw FormatError("missing pose manifest in " + dir.string());
  }
  json manifest;
  try {
    manifest = json::parse(in);
    if (manifest.at("kind").get<std::string>() != "first_frame_pose") {
      throw FormatError("not a first-frame pose: " + dir.string());
    }
    if (manifest.at("format_version").get<uint32_t>() != io::kFormatVersion) {
      throw VersionError("unsupported pose format version in " + dir.string());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed pose manifest: ") + e.what());
  }
  InitPose pose;
  pose.source = InitSource::kExternalFile;
  pose.points = io::read_points(dir / "points.bin");
  pose.nocs = io::read_points(dir / "nocs.bin");
  pose.mesh.vertices = io::read_points(dir / "mesh_verts.bin");
  pose.mesh.faces = io::read_faces(dir / "mesh_faces.bin");
  if (pose.points.rows() != manifest["points"].get<int64_t>() ||
      pose.mesh.vertices.rows() != manifest["mesh_vertices"].get<int64_t>() ||
      pose.mesh.faces.rows() != manifest["mesh_faces"].get<int64_t>()) {
    throw FormatError("pose arrays disagree with their manifest");
  }
  return pose;
}

TrackerState init(const PointCloudFrame& first_frame, const InitPose& pose, const TrackerConfig& config) {
  if (first_frame.points.rows() == 0) {
    throw InputError("first frame is empty");
  }
  if (pose.nocs.rows() != first_frame.points.rows() || pose.points.rows() != first_frame.points.rows()) {
    throw AlignmentError("first-frame pose has " + std::to_string(pose.nocs.rows()) +
                         " points, frame has " + std::to_string(first_frame.points.rows()));
  }
  if (pose.mesh.vertices.rows() == 0 || pose.mesh.faces.rows() == 0) {
    throw InputError("first-frame pose needs a canonical mesh");
  }
  auto rows = resample_indices(first_frame.points.rows(), config.pc_points, config.seed);
  TrackerState state;
  state.prev_points = gather_rows(first_frame.points, rows);
  state.prev_nocs = gather_rows(pose.nocs, rows);
  nocs::clamp_unit(state.prev_nocs);
  state.canonical_mesh = pose.mesh;
  state.frame_index = 0;
  state.mesh_refine_budget = config.mesh_refine_budget;
  return state;
}

StepResult step(const TrackerState& state, const PointCloudFrame& frame, GarmentNet& net,
                const TrackerConfig& config) {
  if (frame.points.rows() == 0) {
    throw InputError("frame is empty");
  }
  if (state.prev_points.rows() != state.prev_nocs.rows()) {
    throw AlignmentError("tracker state points and NOCS differ in length");
  }
  torch::NoGradGuard no_grad;
  net->eval();
  const uint64_t frame_seed = config.seed * 1000003ULL + static_cast<uint64_t>(state.frame_index + 1);

  StepResult r;
  r.point_rows = resample_indices(frame.points.rows(), config.pc_points, frame_seed);
  r.points = gather_rows(frame.points, r.point_rows);
  const bool refine_mesh = state.mesh_refine_budget > 0;
  const auto& mesh = state.canonical_mesh;
  auto samples = sample_surface(mesh.vertices, mesh.faces, config.mesh_points, config.seed);

  StepInputs in;
  in.prev_xyz = to_tensor(state.prev_points).unsqueeze(0);
  in.prev_nocs = to_tensor(state.prev_nocs).unsqueeze(0);
  in.curr_xyz = to_tensor(r.points).unsqueeze(0);
  in.mesh_points = to_tensor(interpolate(samples, mesh.vertices, mesh.faces)).unsqueeze(0);
  in.queries = to_tensor(mesh.vertices).unsqueeze(0);
  in.transform_queries = refine_mesh;
  auto out = net->forward(in, &r.timings);

  r.raw_nocs = to_points(nocs::decode(out.raw_logits[0]));
  r.nocs = to_points(out.refined_nocs[0]);
  r.task_vertices = to_points(out.warped[0]);
  r.canonical_mesh.faces = mesh.faces;
  r.canonical_mesh.vertices = refine_mesh ? to_points(out.queries[0]) : mesh.vertices;
  if (refine_mesh) {
    auto s = out.mesh_scale[0].to(torch::kFloat64).contiguous();
    auto o = out.mesh_offset[0].to(torch::kFloat64).contiguous();
    for (int a = 0; a < 3; ++a) {
      r.mesh_scale[a] = s[a].item<double>();
      r.mesh_offset[a] = o[a].item<double>();
    }
  }

  r.state.prev_points = r.points;
  r.state.prev_nocs = r.nocs;
  r.state.canonical_mesh = r.canonical_mesh;
  r.state.frame_index = state.frame_index + 1;
  r.state.mesh_refine_budget = refine_mesh ? state.mesh_refine_budget - 1 : 0;
  return r;
}

SequenceDataset subsample_frames(const SequenceDataset& seq, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw InputError("keep ratio must be in (0, 1]");
  }
  const double inv = 1.0 / keep_ratio;
  const auto stride = static_cast<size_t>(std::llround(inv));
  if (std::abs(inv - static_cast<double>(stride)) > 1e-6) {
    throw InputError("keep ratio must be the reciprocal of an integer");
  }
  SequenceDataset out = seq;
  out.frames.clear();
  for (size_t t = 0; t < seq.frames.size(); t += stride) {
    out.frames.push_back(seq.frames[t]);
  }
  if (out.frames.size() < 2) {
    throw InputError("fewer than 2 frames remain after subsampling");
  }
  return out;
}

std::vector<size_t> moving_frames(const SequenceDataset& seq, double threshold_m) {
  std::vector<size_t> kept;
  if (seq.frames.empty()) {
    return kept;
  }
  kept.push_back(0);
  for (size_t t = 1; t < seq.frames.size(); ++t) {
    const auto& a = seq.frames[kept.back()].mesh_vertices_task;
    const auto& b = seq.frames[t].mesh_vertices_task;
    if (a.rows() != b.rows() || a.rows() == 0) {
      throw InputError("static-frame filtering needs ground-truth meshes");
    }
    const double mean = (a - b).rowwise().norm().cast<double>().mean();
    if (mean >= threshold_m) {
      kept.push_back(t);
    }
  }
  return kept;
}

SequenceDataset remove_static_frames(const SequenceDataset& seq, double threshold_m) {
  SequenceDataset out = seq;
  out.frames.clear();
  for (size_t t : moving_frames(seq, threshold_m)) out.frames.push_back(seq.frames[t]);
  return out;
}

}  // namespace gtrack

#include "gtrack/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gtrack/kdtree.hpp"

namespace gtrack::eval {

namespace {

using json = nlohmann::ordered_json;
constexpr double kCmPerMeter = 100.0;

void require_nonempty(const PointMatrix& m, const char* what) {
  if (m.rows() == 0) {
    throw InputError(std::string(what) + " is empty");
  }
}

void require_aligned(const PointMatrix& a, const PointMatrix& b, const char* what) {
  if (a.rows() != b.rows()) {
    throw AlignmentError(std::string(what) + ": row counts differ (" + std::to_string(a.rows()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
}

double mean_nn_distance(const PointMatrix& from, const PointMatrix& to) {
  const KdTree tree(to);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    sum += std::sqrt(tree.nearest(from.row(i).transpose()).squared_distance);
  }
  return sum / static_cast<double>(from.rows());
}

double mean_nn_distance_brute(const PointMatrix& from, const PointMatrix& to) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      best = std::min(best, squared_distance(from.row(i), to.row(j)));
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.rows());
}

json metrics_to_json(const FrameMetrics& m) {
  return {{"d_nocs", m.d_nocs}, {"d_chamf_cm", m.d_chamf}, {"d_corr_cm", m.d_corr}};
}

FrameMetrics metrics_from_json(const json& j) {
  return {j.at("d_nocs").get<double>(), j.at("d_chamf_cm").get<double>(),
          j.at("d_corr_cm").get<double>()};
}

std::string threshold_key(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

double d_nocs(const PointMatrix& pred_nocs, const PointMatrix& gt_nocs) {
  require_aligned(pred_nocs, gt_nocs, "d_nocs");
  require_nonempty(pred_nocs, "d_nocs input");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred_nocs.rows(); ++i) {
    sum += std::sqrt(squared_distance(pred_nocs.row(i), gt_nocs.row(i)));
  }
  return sum / static_cast<double>(pred_nocs.rows());
}

double chamfer_cm(const PointMatrix& pred_points, const PointMatrix& gt_points) {
  require_nonempty(pred_points, "chamfer prediction");
  require_nonempty(gt_points, "chamfer ground truth");
  return kCmPerMeter * 0.5 *
         (mean_nn_distance(pred_points, gt_points) + mean_nn_distance(gt_points, pred_points));
}

double chamfer_cm_brute_force(const PointMatrix& pred_points, const PointMatrix& gt_points) {
  require_nonempty(pred_points, "chamfer prediction");
  require_nonempty(gt_points, "chamfer ground truth");
  return kCmPerMeter * 0.5 *
         (mean_nn_distance_brute(pred_points, gt_points) +
          mean_nn_distance_brute(gt_points, pred_points));
}

double d_corr_cm(const PointMatrix& pred_points, const PointMatrix& pred_nocs,
                 const PointMatrix& gt_points, const PointMatrix& gt_nocs) {
  require_aligned(pred_points, pred_nocs, "d_corr prediction");
  require_aligned(gt_points, gt_nocs, "d_corr ground truth");
  require_nonempty(pred_points, "d_corr prediction");
  require_nonempty(gt_points, "d_corr ground truth");
  const KdTree tree(gt_nocs);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred_points.rows(); ++i) {
    const auto hit = tree.nearest(pred_nocs.row(i).transpose());
    sum += std::sqrt(squared_distance(pred_points.row(i), gt_points.row(hit.index)));
  }
  return kCmPerMeter * sum / static_cast<double>(pred_points.rows());
}

double d_corr_cm_brute_force(const PointMatrix& pred_points, const PointMatrix& pred_nocs,
                             const PointMatrix& gt_points, const PointMatrix& gt_nocs) {
  require_aligned(pred_points, pred_nocs, "d_corr prediction");
  require_aligned(gt_points, gt_nocs, "d_corr ground truth");
  require_nonempty(pred_points, "d_corr prediction");
  require_nonempty(gt_points, "d_corr ground truth");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred_points.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < gt_nocs.rows(); ++j) {
      const double d = squared_distance(pred_nocs.row(i), gt_nocs.row(j));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    sum += std::sqrt(squared_distance(pred_points.row(i), gt_points.row(best)));
  }
  return kCmPerMeter * sum / static_cast<double>(pred_points.rows());
}

double accuracy_at(const std::vector<double>& per_frame_d_corr, double threshold_cm) {
  if (per_frame_d_corr.empty()) {
    throw InputError("accuracy_at needs at least one frame");
  }
  size_t hits = 0;
  for (double d : per_frame_d_corr) {
    if (d < threshold_cm) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(per_frame_d_corr.size());
}

FrameMetrics score_frame(const FrameObservation& obs) {
  FrameMetrics m;
  m.d_nocs = d_nocs(obs.pred_point_nocs, obs.gt_point_nocs);
  m.d_chamf = chamfer_cm(obs.pred_surface, obs.gt_surface);
  m.d_corr = d_corr_cm(obs.pred_surface, obs.pred_surface_nocs, obs.gt_surface, obs.gt_surface_nocs);
  return m;
}

SequenceReport summarize(std::vector<FrameMetrics> frames, const std::vector<double>& thresholds_cm,
                         const std::string& seq_id) {
  if (frames.empty()) {
    throw InputError("cannot summarize an empty sequence");
  }
  SequenceReport r;
  r.seq_id = seq_id;
  r.frames = std::move(frames);
  std::vector<double> corr;
  for (const auto& f : r.frames) {
    r.mean.d_nocs += f.d_nocs;
    r.mean.d_chamf += f.d_chamf;
    r.mean.d_corr += f.d_corr;
    corr.push_back(f.d_corr);
  }
  const auto n = static_cast<double>(r.frames.size());
  r.mean.d_nocs /= n;
  r.mean.d_chamf /= n;
  r.mean.d_corr /= n;
  for (double t : thresholds_cm) {
    r.accuracy[t] = accuracy_at(corr, t);
  }
  return r;
}

SequenceReport evaluate_sequence(const std::vector<FrameObservation>& predictions,
                                 const std::vector<double>& thresholds_cm, const std::string& seq_id) {
  std::vector<FrameMetrics> frames;
  frames.reserve(predictions.size());
  for (const auto& obs : predictions) {
    frames.push_back(score_frame(obs));
  }
  return summarize(std::move(frames), thresholds_cm, seq_id);
}

SequenceReport pool_reports(const std::vector<SequenceReport>& reports,
                            const std::vector<double>& thresholds_cm, const std::string& id) {
  std::vector<FrameMetrics> all;
  for (const auto& r : reports) all.insert(all.end(), r.frames.begin(), r.frames.end());
  return summarize(std::move(all), thresholds_cm, id);
}

bool SequenceReport::operator==(const SequenceReport& other) const {
  auto same = [](const FrameMetrics& a, const FrameMetrics& b) {
    return a.d_nocs == b.d_nocs && a.d_chamf == b.d_chamf && a.d_corr == b.d_corr;
  };
  if (seq_id != other.seq_id || frames.size() != other.frames.size() || !same(mean, other.mean) ||
      accuracy != other.accuracy || mean_stage_ms != other.mean_stage_ms) {
    return false;
  }
  for (size_t i = 0; i < frames.size(); ++i) {
    if (!same(frames[i], other.frames[i])) return false;
  }
  return true;
}

void write_report(const SequenceReport& report, const std::filesystem::path& path) {
  json j;
  j["seq_id"] = report.seq_id;
  j["num_frames"] = report.frames.size();
  j["mean"] = metrics_to_json(report.mean);
  json acc = json::object();
  for (const auto& [t, a] : report.accuracy) acc[threshold_key(t)] = a;
  j["accuracy"] = acc;
  j["mean_stage_ms"] = report.mean_stage_ms;
  json d_nocs = json::array();
  json d_chamf = json::array();
  json d_corr = json::array();
  for (const auto& f : report.frames) {
    d_nocs.push_back(f.d_nocs);
    d_chamf.push_back(f.d_chamf);
    d_corr.push_back(f.d_corr);
  }
  j["per_frame"] = {{"d_nocs", d_nocs}, {"d_chamf_cm", d_chamf}, {"d_corr_cm", d_corr}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << j.dump(2) << '\n';
}

SequenceReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing report " + path.string());
  try {
    const json j = json::parse(in);
    SequenceReport r;
    r.seq_id = j.at("seq_id").get<std::string>();
    r.mean = metrics_from_json(j.at("mean"));
    for (const auto& [k, v] : j.at("accuracy").items()) r.accuracy[std::stod(k)] = v.get<double>();
    r.mean_stage_ms = j.at("mean_stage_ms").get<double>();
    const auto& pf = j.at("per_frame");
    const auto n = pf.at("d_nocs").size();
    if (pf.at("d_chamf_cm").size() != n || pf.at("d_corr_cm").size() != n) {
      throw FormatError("per-frame arrays differ in length in " + path.string());
    }
    for (size_t i = 0; i < n; ++i) {
      r.frames.push_back({pf.at("d_nocs")[i].get<double>(), pf.at("d_chamf_cm")[i].get<double>(),
                          pf.at("d_corr_cm")[i].get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError("malformed report " + path.string() + ": " + e.what());
  }
}

}  // namespace gtrack::eval

#include "gtrack/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "gtrack/geometry.hpp"
#include "gtrack/tensor_util.hpp"

namespace gtrack {

namespace fs = std::filesystem;

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

uint64_t mix(uint64_t a, uint64_t b) { return mix_seed(a, b); }

torch::Tensor stack_field(const std::vector<PairSample>& batch, torch::Tensor PairSample::*field) {
  std::vector<torch::Tensor> parts;
  parts.reserve(batch.size());
  for (const auto& s : batch) parts.push_back(s.*field);
  return torch::stack(parts);
}

}  // namespace

void save_checkpoint(const fs::path& path, GarmentNet& net, const std::string& config_json, int64_t epoch,
                     torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive archive;
  archive.write("format_version", c10::IValue(kCheckpointVersion));
  archive.write("epoch", c10::IValue(epoch));
  archive.write("config", c10::IValue(config_json));
  torch::serialize::OutputArchive model;
  net->save(model);
  archive.write("model", model);
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive opt;
    optimizer->save(opt);
    archive.write("optimizer", opt);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) {
    throw FormatError("checkpoint not found: " + path.string());
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("unreadable checkpoint " + path.string());
  }
  return archive;
}

CheckpointInfo info_of(torch::serialize::InputArchive& archive) {
  CheckpointInfo info;
  c10::IValue v;
  try {
    archive.read("format_version", v);
    info.format_version = v.toInt();
    archive.read("epoch", v);
    info.epoch = v.toInt();
    archive.read("config", v);
    info.config_json = v.toStringRef();
  } catch (const c10::Error&) {
    throw FormatError("checkpoint is missing its header fields");
  }
  if (info.format_version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(info.format_version));
  }
  return info;
}

}  // namespace

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  auto archive = open_archive(path);
  return info_of(archive);
}

void load_checkpoint(const fs::path& path, GarmentNet& net, torch::optim::Optimizer* optimizer) {
  auto archive = open_archive(path);
  info_of(archive);
  try {
    torch::serialize::InputArchive model;
    archive.read("model", model);
    net->load(model);
    if (optimizer != nullptr) {
      torch::serialize::InputArchive opt;
      if (archive.try_read("optimizer", opt)) {
        optimizer->load(opt);
      }
    }
  } catch (const c10::Error& e) {
    throw FormatError("checkpoint does not match the network: " + std::string(e.what_without_backtrace()));
  }
}

std::pair<GarmentNet, RunConfig> open_checkpoint(const fs::path& path) {
  auto info = read_checkpoint_info(path);
  RunConfig config = parse_config(info.config_json);
  GarmentNet net(config.model());
  load_checkpoint(path, net);
  net->eval();
  return {net, config};
}

TrainOptions TrainOptions::from(const RunConfig& config) {
  TrainOptions o;
  o.learning_rate = config.optim.learning_rate;
  o.batch_size = config.optim.batch_size;
  o.epochs = config.optim.epochs;
  o.grad_clip = config.optim.grad_clip;
  o.lr_decay_epoch = config.optim.lr_decay_epoch;
  o.lr_decay_factor = config.optim.lr_decay_factor;
  o.pc_points = config.samples.pc_points;
  o.mesh_points = config.samples.mesh_points;
  o.noise = config.noise_params();
  o.train_delta = config.noise.train_delta;
  o.augment_mesh_offset = config.noise.augment_mesh_offset;
  o.scatter_with_gt_nocs = config.scatter_with_gt_nocs;
  o.weights = config.loss;
  o.seed = config.seed;
  o.config_json = serialize(config);
  return o;
}

PairSample make_pair_sample(const SequenceDataset& seq, size_t t, const TrainOptions& options, uint64_t seed) {
  if (t == 0 || t >= seq.frames.size()) {
    throw InputError("training pairs need a previous frame");
  }
  const auto& prev = seq.frames[t - 1];
  const auto& curr = seq.frames[t];
  const auto& mesh = seq.canonical_mesh;
  PairSample s;
  auto prev_rows = resample_indices(prev.points.rows(), options.pc_points, mix(seed, 1));
  auto curr_rows = resample_indices(curr.points.rows(), options.pc_points, mix(seed, 2));
  s.prev_xyz = to_tensor(gather_rows(prev.points, prev_rows));
  s.curr_xyz = to_tensor(gather_rows(curr.points, curr_rows));
  s.curr_nocs = to_tensor(gather_rows(curr.gt_nocs, curr_rows));

  nocs::NoiseParams pc_noise = options.noise;
  pc_noise.delta = options.train_delta;
  s.prev_nocs = to_tensor(nocs::perturb_nocs(gather_rows(prev.gt_nocs, prev_rows), pc_noise, mix(seed, 3)));

  auto samples = sample_surface(mesh.vertices, mesh.faces, options.mesh_points, mix(seed, 4));
  PointMatrix clean = interpolate(samples, mesh.vertices, mesh.faces);
  std::mt19937_64 rng(mix(seed, 5));
  std::array<double, 3> scale{};
  std::array<double, 3> offset{};
  for (int a = 0; a < 3; ++a) {
    scale[a] = std::uniform_real_distribution<double>(options.noise.s_mesh[a].lo, options.noise.s_mesh[a].hi)(rng);
  }
  for (int a = 0; a < 3; ++a) {
    offset[a] = options.augment_mesh_offset
                    ? std::uniform_real_distribution<double>(options.noise.o_pc[a].lo, options.noise.o_pc[a].hi)(rng)
                    : 0.0;
  }
  PointMatrix noisy(clean.rows(), 3);
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double v = (clean(i, a) - 0.5) * scale[a] + 0.5 + offset[a];
      noisy(i, a) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  s.mesh_in = to_tensor(noisy);
  s.mesh_gt = to_tensor(clean);
  s.warp_gt = to_tensor(interpolate(samples, curr.mesh_vertices_task, mesh.faces));
  return s;
}

Trainer::Trainer(GarmentNet net, TrainOptions options)
    : net_(std::move(net)),
      options_(std::move(options)),
      optimizer_(net_->parameters(), torch::optim::AdamOptions(options_.learning_rate)) {
  if (options_.batch_size < 1) {
    throw ConfigError("batch size must be positive");
  }
}

void Trainer::resume(const fs::path& path) {
  load_checkpoint(path, net_, &optimizer_);
  epoch_ = static_cast<int>(read_checkpoint_info(path).epoch);
}

LossTerms Trainer::train_step(const std::vector<PairSample>& batch) {
  net_->train();
  StepInputs in;
  in.prev_xyz = stack_field(batch, &PairSample::prev_xyz);
  in.prev_nocs = stack_field(batch, &PairSample::prev_nocs);
  in.curr_xyz = stack_field(batch, &PairSample::curr_xyz);
  in.mesh_points = stack_field(batch, &PairSample::mesh_in);
  in.queries = stack_field(batch, &PairSample::mesh_gt);
  auto gt_nocs = stack_field(batch, &PairSample::curr_nocs);
  if (options_.scatter_with_gt_nocs) in.scatter_nocs = gt_nocs;
  auto out = net_->forward(in);
  auto terms = joint_loss(out, gt_nocs, in.queries, stack_field(batch, &PairSample::warp_gt), options_.weights);
  const double value = terms.total.item<double>();
  if (!std::isfinite(value)) {
    throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch_ + 1) +
                          " (nocs " + std::to_string(terms.nocs.item<double>()) + ", refined " +
                          std::to_string(terms.refined_nocs.item<double>()) + ", mesh " +
                          std::to_string(terms.mesh.item<double>()) + ", warp " +
                          std::to_string(terms.warp.item<double>()) + ")");
  }
  optimizer_.zero_grad();
  terms.total.backward();
  if (options_.grad_clip > 0.0) {
    torch::nn::utils::clip_grad_norm_(net_->parameters(), options_.grad_clip);
  }
  optimizer_.step();
  return {terms.total.detach(), terms.nocs.detach(), terms.refined_nocs.detach(), terms.mesh.detach(),
          terms.warp.detach()};
}

std::vector<EpochLog> Trainer::fit(const std::vector<SequenceDataset>& sequences,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t s = 0; s < sequences.size(); ++s) {
    for (size_t t = 1; t < sequences[s].frames.size(); ++t) pairs.emplace_back(s, t);
  }
  if (pairs.empty()) {
    throw InputError("no training pairs");
  }
  std::vector<EpochLog> logs;
  while (epoch_ < options_.epochs) {
    const auto start = std::chrono::steady_clock::now();
    const bool decayed = options_.lr_decay_epoch > 0 && epoch_ >= options_.lr_decay_epoch;
    const double lr = options_.learning_rate * (decayed ? options_.lr_decay_factor : 1.0);
    for (auto& group : optimizer_.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(options_.seed, static_cast<uint64_t>(epoch_)));
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    int steps = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(options_.batch_size)) {
      std::vector<PairSample> batch;
      for (size_t i = begin; i < std::min(order.size(), begin + options_.batch_size); ++i) {
        const auto [s, t] = pairs[order[i]];
        const uint64_t seed = mix(mix(options_.seed, static_cast<uint64_t>(epoch_) + 1000), order[i]);
        batch.push_back(make_pair_sample(sequences[s], t, options_, seed));
      }
      auto terms = train_step(batch);
      log.loss += terms.total.item<double>();
      log.nocs += terms.nocs.item<double>();
      log.refined_nocs += terms.refined_nocs.item<double>();
      log.mesh += terms.mesh.item<double>();
      log.warp += terms.warp.item<double>();
      ++steps;
    }
    ++epoch_;
    log.epoch = epoch_;
    for (double* v : {&log.loss, &log.nocs, &log.refined_nocs, &log.mesh, &log.warp}) *v /= steps;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!options_.checkpoint.empty()) {
      save_checkpoint(options_.checkpoint, net_, options_.config_json, epoch_, &optimizer_);
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

TrackedSequence track_sequence(const SequenceDataset& seq, GarmentNet& net, const InitPose& pose,
                               const TrackerConfig& config) {
  if (seq.frames.size() < 2) {
    throw InputError("tracking needs at least 2 frames");
  }
  TrackedSequence out;
  out.sequence = seq;
  TrackerState state = init(seq.frames.front(), pose, config);
  for (size_t t = 1; t < seq.frames.size(); ++t) {
    auto r = step(state, seq.frames[t], net, config);
    state = r.state;
    out.steps.push_back(std::move(r));
  }
  return out;
}

eval::FrameObservation observe_frame(const PointMatrix& pred_nocs, const std::vector<int64_t>& point_rows,
                                     const CanonicalMesh& pred_canonical, const PointMatrix& pred_task_vertices,
                                     const PointCloudFrame& frame, const CanonicalMesh& gt_mesh,
                                     int surface_points, uint64_t seed) {
  eval::FrameObservation o;
  o.pred_point_nocs = pred_nocs;
  o.gt_point_nocs = gather_rows(frame.gt_nocs, point_rows);
  const auto& pm = pred_canonical;
  auto ps = sample_surface(pm.vertices, pm.faces, surface_points, seed);
  o.pred_surface = interpolate(ps, pred_task_vertices, pm.faces);
  o.pred_surface_nocs = interpolate(ps, pm.vertices, pm.faces);
  auto gs = sample_surface(gt_mesh.vertices, gt_mesh.faces, surface_points, mix(seed, 1));
  o.gt_surface = interpolate(gs, frame.mesh_vertices_task, gt_mesh.faces);
  o.gt_surface_nocs = interpolate(gs, gt_mesh.vertices, gt_mesh.faces);
  return o;
}

std::vector<eval::FrameObservation> observe(const TrackedSequence& tracked, int surface_points, uint64_t seed) {
  const auto& seq = tracked.sequence;
  std::vector<eval::FrameObservation> obs;
  for (size_t k = 0; k < tracked.steps.size(); ++k) {
    const auto& r = tracked.steps[k];
    obs.push_back(observe_frame(r.nocs, r.point_rows, r.canonical_mesh, r.task_vertices, seq.frames[k + 1],
                                seq.canonical_mesh, surface_points, mix(seed, k)));
  }
  return obs;
}

TrackerConfig tracker_config(const RunConfig& config, const SequenceDataset& seq) {
  TrackerConfig t;
  t.pc_points = config.samples.pc_points;
  t.mesh_points = config.samples.mesh_points;
  t.seed = config.seed;
  t.mesh_refine_budget = config.track.mesh_refine_budget >= 0
                             ? config.track.mesh_refine_budget
                             : default_refine_budget(parse_script(seq.manifest.script));
  return t;
}

InitPose make_init_pose(const SequenceDataset& seq, const RunConfig& config, const fs::path& external_dir) {
  switch (parse_init_source(config.track.init)) {
    case InitSource::kGroundTruth:
      return ground_truth_pose(seq);
    case InitSource::kPerturbed:
      return perturbed_pose(seq, config.noise_params(), mix(config.seed, seq.manifest.seed));
    case InitSource::kExternalFile:
      if (external_dir.empty()) {
        throw InputError("external init needs a pose directory");
      }
      return read_init_pose(external_dir);
  }
  throw InputError("unknown init source");
}

eval::SequenceReport evaluate(const SequenceDataset& seq, GarmentNet& net, const InitPose& pose,
                              const RunConfig& config) {
  auto filtered = remove_static_frames(seq, config.track.static_threshold_m);
  if (filtered.frames.size() < 2) {
    throw InputError("sequence " + seq.manifest.seq_id + " has no moving frames");
  }
  auto tracked = track_sequence(filtered, net, pose, tracker_config(config, seq));
  auto report = eval::evaluate_sequence(observe(tracked, config.samples.mesh_points, config.seed),
                                        config.track.thresholds_cm, seq.manifest.seq_id);
  double total = 0.0;
  for (const auto& r : tracked.steps) total += r.timings.total_ms();
  report.mean_stage_ms = total / static_cast<double>(tracked.steps.size());
  return report;
}

}  // namespace gtrack

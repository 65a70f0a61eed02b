#include "gtrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gtrack/tracker.hpp"

namespace gtrack {

using json = nlohmann::ordered_json;

namespace {

// Reads known keys from one JSON object and rejects anything else.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw ConfigError(where_ + " must be an object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      return;
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad type for " + where_ + "." + key);
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw ConfigError("unknown config key " + where_ + "." + k);
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  json j;
  j["data"] = {{"root", c.data.root},
               {"category", c.data.category},
               {"scripts", c.data.scripts},
               {"instances", c.data.instances},
               {"sequences_per_instance", c.data.sequences_per_instance},
               {"frames", c.data.frames},
               {"template_resolution", c.data.template_resolution},
               {"cameras", c.data.cameras},
               {"points_per_frame", c.data.points_per_frame},
               {"raster_resolution", c.data.raster_resolution}};
  j["optim"] = {{"optimizer", c.optim.optimizer},
                {"learning_rate", c.optim.learning_rate},
                {"batch_size", c.optim.batch_size},
                {"epochs", c.optim.epochs},
                {"grad_clip", c.optim.grad_clip},
                {"lr_decay_epoch", c.optim.lr_decay_epoch},
                {"lr_decay_factor", c.optim.lr_decay_factor}};
  j["samples"] = {{"pc_points", c.samples.pc_points}, {"mesh_points", c.samples.mesh_points}};
  j["noise"] = {{"level", c.noise.level},
                {"train_delta", c.noise.train_delta},
                {"augment_mesh_offset", c.noise.augment_mesh_offset}};
  j["net"] = {{"grid", c.net.grid},
              {"channel_scale", c.net.channel_scale},
              {"voxel_size", c.net.voxel_size},
              {"encoder_channels", c.net.encoder_channels},
              {"decoder_channels", c.net.decoder_channels},
              {"attention_dim", c.net.attention_dim},
              {"fusion_channels", c.net.fusion_channels},
              {"bins", c.net.bins},
              {"use_nocs_embedding", c.net.use_nocs_embedding},
              {"query_residual", c.net.query_residual},
              {"batch_norm", c.net.batch_norm},
              {"scatter_dim", c.net.scatter_dim},
              {"volume_base_channels", c.net.volume_base_channels},
              {"volume_channels", c.net.volume_channels},
              {"warp_decoder", c.net.warp_decoder}};
  j["track"] = {{"init", c.track.init},
                {"mesh_refine_budget", c.track.mesh_refine_budget},
                {"static_threshold_m", c.track.static_threshold_m},
                {"thresholds_cm", c.track.thresholds_cm}};
  j["loss"] = {{"nocs", c.loss.nocs},
               {"refined_nocs", c.loss.refined_nocs},
               {"mesh", c.loss.mesh},
               {"warp", c.loss.warp}};
  j["scatter_with_gt_nocs"] = c.scatter_with_gt_nocs;
  j["seed"] = c.seed;
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Reader root(j, "config");
  if (const json* s = root.section("data")) {
    Reader r(*s, "data");
    r.get("root", c.data.root);
    r.get("category", c.data.category);
    r.get("scripts", c.data.scripts);
    r.get("instances", c.data.instances);
    r.get("sequences_per_instance", c.data.sequences_per_instance);
    r.get("frames", c.data.frames);
    r.get("template_resolution", c.data.template_resolution);
    r.get("cameras", c.data.cameras);
    r.get("points_per_frame", c.data.points_per_frame);
    r.get("raster_resolution", c.data.raster_resolution);
    r.finish();
  }
  if (const json* s = root.section("optim")) {
    Reader r(*s, "optim");
    r.get("optimizer", c.optim.optimizer);
    r.get("learning_rate", c.optim.learning_rate);
    r.get("batch_size", c.optim.batch_size);
    r.get("epochs", c.optim.epochs);
    r.get("grad_clip", c.optim.grad_clip);
    r.get("lr_decay_epoch", c.optim.lr_decay_epoch);
    r.get("lr_decay_factor", c.optim.lr_decay_factor);
    r.finish();
  }
  if (const json* s = root.section("samples")) {
    Reader r(*s, "samples");
    r.get("pc_points", c.samples.pc_points);
    r.get("mesh_points", c.samples.mesh_points);
    r.finish();
  }
  if (const json* s = root.section("noise")) {
    Reader r(*s, "noise");
    r.get("level", c.noise.level);
    r.get("train_delta", c.noise.train_delta);
    r.get("augment_mesh_offset", c.noise.augment_mesh_offset);
    r.finish();
  }
  if (const json* s = root.section("net")) {
    Reader r(*s, "net");
    r.get("grid", c.net.grid);
    r.get("channel_scale", c.net.channel_scale);
    r.get("voxel_size", c.net.voxel_size);
    r.get("encoder_channels", c.net.encoder_channels);
    r.get("decoder_channels", c.net.decoder_channels);
    r.get("attention_dim", c.net.attention_dim);
    r.get("fusion_channels", c.net.fusion_channels);
    r.get("bins", c.net.bins);
    r.get("use_nocs_embedding", c.net.use_nocs_embedding);
    r.get("query_residual", c.net.query_residual);
    r.get("batch_norm", c.net.batch_norm);
    r.get("scatter_dim", c.net.scatter_dim);
    r.get("volume_base_channels", c.net.volume_base_channels);
    r.get("volume_channels", c.net.volume_channels);
    r.get("warp_decoder", c.net.warp_decoder);
    r.finish();
  }
  if (const json* s = root.section("track")) {
    Reader r(*s, "track");
    r.get("init", c.track.init);
    r.get("mesh_refine_budget", c.track.mesh_refine_budget);
    r.get("static_threshold_m", c.track.static_threshold_m);
    r.get("thresholds_cm", c.track.thresholds_cm);
    r.finish();
  }
  if (const json* s = root.section("loss")) {
    Reader r(*s, "loss");
    r.get("nocs", c.loss.nocs);
    r.get("refined_nocs", c.loss.refined_nocs);
    r.get("mesh", c.loss.mesh);
    r.get("warp", c.loss.warp);
    r.finish();
  }
  root.get("scatter_with_gt_nocs", c.scatter_with_gt_nocs);
  root.get("seed", c.seed);
  root.finish();
  return c;
}

}  // namespace

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.encoder.voxel_size = net.voxel_size;
  m.encoder.encoder_channels = net.encoder_channels;
  m.encoder.decoder_channels = net.decoder_channels;
  m.fusion.feature_dim = net.decoder_channels.empty() ? 0 : net.decoder_channels.front();
  m.fusion.mid_dim = net.attention_dim;
  m.fusion.output_channels = net.fusion_channels;
  m.fusion.bins = net.bins;
  m.fusion.use_nocs_embedding = net.use_nocs_embedding;
  m.fusion.query_residual = net.query_residual;
  const int64_t fused = net.fusion_channels.empty() ? 0 : net.fusion_channels.back();
  m.refiner.bins = net.bins;
  m.refiner.fusion_dim = fused;
  m.refiner.channel_scale = net.channel_scale;
  m.refiner.batch_norm = net.batch_norm;
  m.warp.grid = net.grid;
  m.warp.fusion_dim = fused;
  m.warp.scatter_dim = net.scatter_dim;
  m.warp.base_channels = net.volume_base_channels;
  m.warp.volume_channels = net.volume_channels;
  m.warp.decoder_channels = net.warp_decoder;
  return m;
}

nocs::NoiseParams RunConfig::noise_params() const {
  return nocs::NoiseParams::for_level(nocs::parse_noise_level(noise.level));
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    parse_category(data.category);
    for (const auto& s : data.scripts) parse_script(s);
    nocs::parse_noise_level(noise.level);
    parse_init_source(track.init);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  require(!data.scripts.empty(), "data.scripts must not be empty");
  require(data.instances >= 0 && data.sequences_per_instance >= 1, "bad instance counts");
  require(data.frames >= 2, "data.frames must be at least 2");
  require(data.template_resolution >= 4, "data.template_resolution must be at least 4");
  require(data.cameras >= 1 && data.points_per_frame >= 1 && data.raster_resolution >= 8,
          "bad render settings");
  require(optim.optimizer == "adam", "only the adam optimizer is supported");
  require(optim.learning_rate > 0.0 && optim.batch_size >= 1 && optim.epochs >= 0 &&
              optim.lr_decay_epoch >= 0 && optim.lr_decay_factor > 0.0,
          "bad optimizer settings");
  require(samples.pc_points >= 1 && samples.mesh_points >= 1, "sample counts must be positive");
  require(noise.train_delta >= 0.0, "noise.train_delta must be non-negative");
  require(track.static_threshold_m >= 0.0, "track.static_threshold_m must be non-negative");
  require(track.mesh_refine_budget >= -1, "track.mesh_refine_budget must be -1 or more");
  model().validate();
}

std::string serialize(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write config " + path.string());
  }
  out << serialize(config);
}

}  // namespace gtrack

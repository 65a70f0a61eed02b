#pragma once

// Run configuration shared by every CLI command. Serialized as JSON with a
// fixed key order; parse(serialize(c)) reproduces the same bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtrack/model.hpp"
#include "gtrack/nocs.hpp"
#include "gtrack/synth.hpp"

namespace gtrack {

struct DataConfig {
  std::string root = "data";
  std::string category = "Shirt";
  std::vector<std::string> scripts{"fold_lr", "fold_ud"};
  int instances = 10;
  int sequences_per_instance = 1;
  int frames = 20;
  int template_resolution = 16;
  int cameras = 4;
  int points_per_frame = 4000;
  int raster_resolution = 160;
};

struct OptimConfig {
  std::string optimizer = "adam";
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 30;
  double grad_clip = 0.0;  // 0 disables clipping
  int lr_decay_epoch = 0;  // 0 keeps the rate constant
  double lr_decay_factor = 0.1;
};

struct SampleConfig {
  int pc_points = 4000;
  int mesh_points = 6000;
};

struct NoiseConfig {
  std::string level = "1x";
  double train_delta = 0.0;         // Gaussian term on previous-frame NOCS during training
  bool augment_mesh_offset = true;  // also shift the training mesh by o_pc
};

struct NetConfig {
  int grid = 32;
  int channel_scale = 4;
  double voxel_size = 0.01;
  std::vector<int64_t> encoder_channels{64, 64, 128, 256};
  std::vector<int64_t> decoder_channels{64, 64, 64, 128};
  int64_t attention_dim = 64;
  std::vector<int64_t> fusion_channels{64, 128, 128};
  int64_t bins = 64;
  bool use_nocs_embedding = true;
  bool query_residual = true;
  bool batch_norm = true;
  int64_t scatter_dim = 32;
  int64_t volume_base_channels = 16;
  int64_t volume_channels = 64;
  std::vector<int64_t> warp_decoder{128, 128};
};

struct TrackConfig {
  std::string init = "ground_truth";
  int mesh_refine_budget = -1;  // -1: 1 for folding scripts, 15 otherwise
  double static_threshold_m = 0.001;
  std::vector<double> thresholds_cm{3.0, 5.0, 10.0};
};

struct RunConfig {
  DataConfig data;
  OptimConfig optim;
  SampleConfig samples;
  NoiseConfig noise;
  NetConfig net;
  TrackConfig track;
  LossWeights loss;
  bool scatter_with_gt_nocs = true;  // training scatters features at labelled NOCS
  uint64_t seed = 0;

  [[nodiscard]] ModelConfig model() const;
  [[nodiscard]] nocs::NoiseParams noise_params() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

std::string serialize(const RunConfig& config);
/// Missing keys take defaults; unknown keys and wrong types throw ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace gtrack

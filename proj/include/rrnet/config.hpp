#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

namespace rrnet {

// Every pipeline tunable in one place; defaults match the documented
// training recipe and codec settings.
struct RunConfig {
  // codec
  double var_threshold = 100.0;
  int max_block = 32;
  int min_block = 4;
  // dataset
  int patch_stride = 64;
  // training
  int batch_size = 16;
  double base_lr = 1e-4;
  double lr_gamma = 0.1;
  int lr_interval_epochs = 100;
  int total_epochs = 120;
  int finetune_epochs = 20;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  // model
  int stem_channels = 64;
  int block_channels = 64;
  // filtering
  int tile_size = 64;
  int tile_overlap = 8;

  void validate() const;  // throws ConfigError
};

// "key = value" lines, '#' comments. Unknown keys are rejected with the
// nearest valid key suggested; missing keys keep their defaults; all values
// are validated before anything runs.
RunConfig parse_config(std::istream& in, const std::string& source_name);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace rrnet

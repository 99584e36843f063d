// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "cigan/generator.hpp"

namespace cigan::train {

// Full training recipe. Defaults are the published recipe; everything is
// overridable from the JSON run config.
struct TrainConfig {
  int epochs = 100;
  int batch = 10;
  int crop = 224;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.999;
  double lr = 1e-4;
  int lr_fixed_epochs = 50;
  double lambda_exp = 10.0;
  double lambda_con = 10.0;
  double lambda_per = 1.0;
  double exposure_e = 0.1;
  double exposure_sigma = 0.1;
  int exposure_window = 7;
  bool exposure_per_channel = false;  // gray mean by default
  double lip_lambda = 1.0;
  uint64_t seed = 0;
  nn::Toggles toggles;

  // artifact knobs
  std::string backbone = "random";  // "random" or a weights-archive path
  uint64_t backbone_seed = 2024;
  int max_steps = 0;       // stop after this many steps when > 0
  int threads = 0;         // OpenMP threads; 0 keeps the runtime default
  bool hflip = false;      // horizontal-flip augmentation
  int checkpoint_every = 1;  // epochs between checkpoints

  std::string normal_dir;
  std::string low_dir;
  std::string out_dir;
};

// piecewise schedule: fixed for the first lr_fixed_epochs, then linear decay
// to zero at the final epoch
double lr_schedule(int epoch, const TrainConfig& cfg);

// Strict JSON parsing: unknown keys are an error (the message names the key);
// absent keys keep their defaults.
TrainConfig parse_config_file(const std::string& path);
TrainConfig parse_config_text(const std::string& text, const std::string& origin);

std::string config_to_json(const TrainConfig& cfg);  // resolved snapshot
std::string config_hash(const TrainConfig& cfg);

}  // namespace cigan::train

#pragma once

#include <cstdint>
#include <string>

#include "souf/backbone/vit.hpp"
#include "souf/config_file.hpp"
#include "souf/data/augment.hpp"
#include "souf/data/dataset.hpp"
#include "souf/engine/optimizer.hpp"
#include "souf/losses/souf_losses.hpp"

namespace souf::engine {

struct TrainConfig {
  double lr_encoder = 0.001;
  double lr_classifier = 0.01;
  double momentum = 0.9;
  /// Optimizer for source pretraining; adaptation always uses SGD with momentum.
  OptimizerKind pretrain_optimizer = OptimizerKind::sgd;
  double pretrain_lr_encoder = 0.001;
  double pretrain_lr_classifier = 0.01;
  int pretrain_epochs = 20;
  int adapt_epochs = 8;
  int batch_size = 32;
  int labeled_batch_size = 8;
  int mix_batch_size = 16;
  int reliable_k = 2;
  double beta = 1.0;
  double gamma = 1.0;
  double val_fraction = 0.2;
  /// Strong augmentation of source images during pretraining.
  bool pretrain_augment = true;
  data::RandAugmentPolicy augment;
  double grad_clip = 0.0;  // 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct RunConfig {
  data::ShiftConfig data;
  backbone::EncoderConfig encoder;
  losses::LossWeights loss;
  TrainConfig train;
  /// Canonical hash of the source config file (stable under key reordering).
  std::uint64_t config_hash = 0;

  /// Parses `[data]`, `[model]` (optional), `[loss]`, `[train]`.
  static RunConfig from_config(const ConfigFile& cfg);
  /// Replaces the data and training seeds.
  void set_seed(std::uint64_t seed);
};

OptimizerKind parse_optimizer(const std::string& name);

}  // namespace souf::engine

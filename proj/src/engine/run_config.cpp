#include "souf/engine/run_config.hpp"

namespace souf::engine {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "'", "pretrain_optimizer");
}

void TrainConfig::validate() const {
  if (!(lr_encoder > 0.0)) throw ConfigError("lr_encoder must be > 0", "lr_encoder");
  if (!(lr_classifier > 0.0)) throw ConfigError("lr_classifier must be > 0", "lr_classifier");
  if (!(pretrain_lr_encoder > 0.0))
    throw ConfigError("pretrain_lr_encoder must be > 0", "pretrain_lr_encoder");
  if (!(pretrain_lr_classifier > 0.0))
    throw ConfigError("pretrain_lr_classifier must be > 0", "pretrain_lr_classifier");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)", "momentum");
  if (pretrain_epochs < 0) throw ConfigError("pretrain_epochs must be >= 0", "pretrain_epochs");
  if (adapt_epochs < 0) throw ConfigError("adapt_epochs must be >= 0", "adapt_epochs");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2", "batch_size");
  if (labeled_batch_size < 1) throw ConfigError("labeled_batch_size must be >= 1", "labeled_batch_size");
  if (mix_batch_size < 1) throw ConfigError("mix_batch_size must be >= 1", "mix_batch_size");
  if (reliable_k < 0) throw ConfigError("reliable_k must be >= 0", "reliable_k");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0", "beta");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0", "gamma");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in [0, 1)", "val_fraction");
  if (augment.num_ops < 0) throw ConfigError("augment_ops must be >= 0", "augment_ops");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0", "grad_clip");
}

RunConfig RunConfig::from_config(const ConfigFile& cfg) {
  RunConfig rc;
  rc.data = data::ShiftConfig::from_config(cfg);

  rc.encoder.image_size = rc.data.image_size;
  rc.encoder.channels = rc.data.channels;
  rc.encoder.patch_size = rc.data.patch_size;
  rc.encoder.num_classes = rc.data.num_classes;
  rc.encoder.embed_dim = static_cast<int>(cfg.get_int("model", "embed_dim", 128));
  rc.encoder.depth = static_cast<int>(cfg.get_int("model", "depth", 4));
  rc.encoder.heads = static_cast<int>(cfg.get_int("model", "heads", 4));
  rc.encoder.mlp_ratio = static_cast<int>(cfg.get_int("model", "mlp_ratio", 4));
  rc.encoder.validate();

  rc.loss = losses::LossWeights::from_config(cfg);

  TrainConfig& t = rc.train;
  t.lr_encoder = cfg.require_double("train", "lr_encoder");
  t.lr_classifier = cfg.require_double("train", "lr_classifier");
  t.pretrain_epochs = static_cast<int>(cfg.require_int("train", "pretrain_epochs"));
  t.adapt_epochs = static_cast<int>(cfg.require_int("train", "adapt_epochs"));
  t.batch_size = static_cast<int>(cfg.require_int("train", "batch_size"));
  t.momentum = cfg.get_double("train", "momentum", t.momentum);
  t.pretrain_optimizer = parse_optimizer(cfg.get_string("train", "pretrain_optimizer", "sgd"));
  t.pretrain_lr_encoder = cfg.get_double("train", "pretrain_lr_encoder", t.lr_encoder);
  t.pretrain_lr_classifier = cfg.get_double("train", "pretrain_lr_classifier", t.lr_classifier);
  t.labeled_batch_size =
      static_cast<int>(cfg.get_int("train", "labeled_batch_size", t.labeled_batch_size));
  t.mix_batch_size = static_cast<int>(cfg.get_int("train", "mix_batch_size", t.mix_batch_size));
  t.reliable_k = static_cast<int>(cfg.get_int("train", "reliable_k", t.reliable_k));
  t.beta = cfg.get_double("train", "beta", t.beta);
  t.gamma = cfg.get_double("train", "gamma", t.gamma);
  t.val_fraction = cfg.get_double("train", "val_fraction", t.val_fraction);
  t.pretrain_augment = cfg.get_bool("train", "pretrain_augment", t.pretrain_augment);
  t.augment.num_ops = static_cast<int>(cfg.get_int("train", "augment_ops", t.augment.num_ops));
  t.augment.magnitude =
      static_cast<int>(cfg.get_int("train", "augment_magnitude", t.augment.magnitude));
  t.grad_clip = cfg.get_double("train", "grad_clip", t.grad_clip);
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", std::int64_t(rc.data.seed)));
  t.validate();

  rc.config_hash = cfg.hash();
  return rc;
}

void RunConfig::set_seed(std::uint64_t seed) {
  data.seed = seed;
  train.seed = seed;
}

}  // namespace souf::engine

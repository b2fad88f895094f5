#pragma once

#include <vector>

#include "souf/backbone/vit.hpp"

namespace souf::engine {

enum class OptimizerKind { sgd, adam };

/// SGD with heavy-ball momentum (v <- mu v + g; w <- w - lr v) or Adam, with
/// separate learning rates for encoder and classifier parameters. Classifier
/// parameters are never touched while the model's classifier is frozen.
class Optimizer {
 public:
  using Kind = OptimizerKind;

  Optimizer(Kind kind, double lr_encoder, double lr_classifier, double momentum = 0.9);

  void step(backbone::VisionTransformer& model);
  /// Rescales all trainable gradients so their global L2 norm is <= max_norm.
  /// Returns the norm before clipping.
  static double clip_grad_norm(backbone::VisionTransformer& model, double max_norm);

 private:
  Kind kind_;
  double lr_encoder_;
  double lr_classifier_;
  double momentum_;
  long steps_ = 0;
  std::vector<Mat> first_;
  std::vector<Mat> second_;
};

}  // namespace souf::engine

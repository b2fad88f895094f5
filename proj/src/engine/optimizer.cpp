#include "souf/engine/optimizer.hpp"

#include <cmath>

namespace souf::engine {

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

Optimizer::Optimizer(Kind kind, double lr_encoder, double lr_classifier, double momentum)
    : kind_(kind), lr_encoder_(lr_encoder), lr_classifier_(lr_classifier), momentum_(momentum) {}

void Optimizer::step(backbone::VisionTransformer& model) {
  auto params = model.parameters();
  if (first_.empty()) {
    for (const auto* p : params) {
      first_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      if (kind_ == Kind::adam) second_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++steps_;
  const bool frozen = model.classifier_frozen();
  for (std::size_t k = 0; k < params.size(); ++k) {
    backbone::Param& p = *params[k];
    if (p.classifier && frozen) continue;
    const auto lr = static_cast<float>(p.classifier ? lr_classifier_ : lr_encoder_);
    if (kind_ == Kind::sgd) {
      first_[k] = float(momentum_) * first_[k] + p.grad;
      p.value -= lr * first_[k];
    } else {
      first_[k] = float(kAdamBeta1) * first_[k] + float(1.0 - kAdamBeta1) * p.grad;
      second_[k] = float(kAdamBeta2) * second_[k] +
                   float(1.0 - kAdamBeta2) * p.grad.cwiseProduct(p.grad);
      const auto c1 = float(1.0 - std::pow(kAdamBeta1, double(steps_)));
      const auto c2 = float(1.0 - std::pow(kAdamBeta2, double(steps_)));
      p.value.array() -=
          lr * (first_[k].array() / c1) / ((second_[k].array() / c2).sqrt() + float(kAdamEps));
    }
  }
}

double Optimizer::clip_grad_norm(backbone::VisionTransformer& model, double max_norm) {
  double sq = 0.0;
  const bool frozen = model.classifier_frozen();
  for (const auto* p : model.parameters())
    if (!(p->classifier && frozen)) sq += p->grad.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto* p : model.parameters()) p->grad *= scale;
  }
  return norm;
}

}  // namespace souf::engine

#include "souf/engine/prediction_store.hpp"

#include <string>

namespace souf::engine {

PredictionStore::PredictionStore(std::span<const std::int64_t> ids, int num_classes, double alpha)
    : alpha_(alpha) {
  if (num_classes < 1) throw ConfigError("PredictionStore: num_classes must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)", "alpha");
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (!index_.emplace(ids[k], k).second)
      throw InputError("PredictionStore: duplicate id " + std::to_string(ids[k]));
  ema_ = MatD::Constant(Eigen::Index(ids.size()), num_classes, 1.0 / num_classes);
}

std::size_t PredictionStore::slot(std::int64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InputError("PredictionStore: unknown id " + std::to_string(id));
  return it->second;
}

void PredictionStore::update(std::span<const std::int64_t> ids, const MatD& probs) {
  if (Eigen::Index(ids.size()) != probs.rows() || probs.cols() != ema_.cols())
    throw InputError("PredictionStore: update shape mismatch");
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto r = Eigen::Index(slot(ids[k]));
    ema_.row(r) = alpha_ * ema_.row(r) + (1.0 - alpha_) * probs.row(Eigen::Index(k));
  }
}

MatD PredictionStore::rows(std::span<const std::int64_t> ids) const {
  MatD out(Eigen::Index(ids.size()), ema_.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) out.row(Eigen::Index(k)) = ema_.row(Eigen::Index(slot(ids[k])));
  return out;
}

Eigen::RowVectorXd PredictionStore::row(std::int64_t id) const {
  return ema_.row(Eigen::Index(slot(id)));
}

}  // namespace souf::engine

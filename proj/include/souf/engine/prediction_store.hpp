#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "souf/common.hpp"

namespace souf::engine {

/// Exponential moving average of per-sample predictions, keyed by sample id:
///   y_hat <- alpha * y_hat + (1 - alpha) * p
/// Rows start at the uniform distribution.
class PredictionStore {
 public:
  PredictionStore(std::span<const std::int64_t> ids, int num_classes, double alpha = 0.7);

  /// Applies one EMA step to each listed id. Throws InputError on an unknown id.
  void update(std::span<const std::int64_t> ids, const MatD& probs);
  /// Marks the end of an epoch's update.
  void advance_epoch() { ++epoch_; }

  MatD rows(std::span<const std::int64_t> ids) const;
  Eigen::RowVectorXd row(std::int64_t id) const;

  double alpha() const { return alpha_; }
  int epoch() const { return epoch_; }
  std::size_t size() const { return index_.size(); }
  bool contains(std::int64_t id) const { return index_.count(id) != 0; }

 private:
  std::size_t slot(std::int64_t id) const;

  std::unordered_map<std::int64_t, std::size_t> index_;
  MatD ema_;
  double alpha_;
  int epoch_ = 0;
};

}  // namespace souf::engine

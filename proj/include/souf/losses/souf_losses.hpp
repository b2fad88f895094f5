#pragma once

// SOUF objectives as pure functions of probability matrices. Each returns the
// scalar and its gradient with respect to the probability inputs; the caller
// chains the gradient through the softmax. Pair weights are computed from the
// probability values but treated as constants (no gradient flows through them).

#include <span>
#include <string>
#include <vector>

#include "souf/common.hpp"
#include "souf/config_file.hpp"

namespace souf::losses {

inline constexpr double kLogClamp = 1e-12;
inline constexpr double kPrClamp = 1e-6;

enum class CategorySource { ground_truth, pseudo_label };

struct CategoryAssignment {
  std::vector<int> labels;
  CategorySource source = CategorySource::pseudo_label;
};

struct LossWeights {
  double lambda_pwc = 0.1;
  double lambda_rmc = 0.1;
  double lambda_pr = 3.0;
  double tau = 0.15;
  double alpha = 0.7;

  void validate() const;
  /// Reads the `[loss]` section; all five keys are required.
  static LossWeights from_config(const ConfigFile& cfg);
};

struct LossResult {
  double value = 0.0;
  MatD grad;
};

/// Pair weight of two rows: 1 for two views of the same sample, the dot
/// product of their predictions for the same category, 0 otherwise.
double adaptive_weight(std::span<const double> p_i, std::span<const double> p_k, int cat_i,
                       int cat_k, bool same_index);

/// Weight matrix for a weak||strong stacked batch of 2N rows; rows r and
/// r +/- N are views of one sample. The diagonal is zero (an anchor is never
/// its own positive).
MatD pwc_weights(const MatD& probs, const CategoryAssignment& cats);

/// Probability-space weighted contrastive loss with explicit pair weights.
/// Sum over anchors i and positives k != i of
///   w_ik * (-p_i.p_k / tau + log sum_{j != i} exp(p_i.p_j / tau)),
/// divided by the number of pairs with w_ik > 0.
LossResult pwc_loss_weighted(const MatD& probs, const MatD& weights, double tau);

/// pwc_loss_weighted with weights from `pwc_weights`. Rows must be even.
LossResult pwc_loss(const MatD& probs, const CategoryAssignment& cats, double tau);

/// Mean over mixed rows of -(lam_hat log P[y_i] + (1 - lam_hat) log P[y_j]).
LossResult mixup_ce_loss(const MatD& mixed_probs, std::span<const int> y_i,
                         std::span<const int> y_j, std::span<const double> lam_hat);

struct MixPairing {
  int i = 0;  // component row of the first image
  int j = 0;  // component row of the second image
};

struct ContrastiveResult {
  double value = 0.0;
  MatD grad_mixed;
  MatD grad_components;
};

/// Pair weights of mixed anchors against component rows, once toward the
/// first component's category (`toward_i`) and once toward the second's.
struct MixWeights {
  MatD toward_i;
  MatD toward_j;
};

MixWeights mixup_contrastive_weights(const MatD& mixed_probs, const MatD& component_probs,
                                     std::span<const MixPairing> pairing,
                                     std::span<const int> component_cats);

/// Mixup contrastive loss with explicit weights: anchors are mixed rows,
/// candidates are component rows; the lam_hat-weighted term pulls toward
/// component i's category, the (1 - lam_hat) term toward component j's.
ContrastiveResult mixup_contrastive_loss_weighted(const MatD& mixed_probs,
                                                  const MatD& component_probs,
                                                  const MixWeights& weights,
                                                  std::span<const double> lam_hat, double tau);

ContrastiveResult mixup_contrastive_loss(const MatD& mixed_probs, const MatD& component_probs,
                                         std::span<const MixPairing> pairing,
                                         std::span<const double> lam_hat,
                                         std::span<const int> component_cats, double tau);

struct RmcResult {
  double value = 0.0;
  double mix_ce = 0.0;
  double mix_con = 0.0;
  MatD grad_mixed;
  MatD grad_components;
};

/// Mixup cross-entropy plus mixup contrastive.
RmcResult rmc_loss(const MatD& mixed_probs, const MatD& component_probs,
                   std::span<const MixPairing> pairing, std::span<const double> lam_hat,
                   std::span<const int> component_labels, double tau);

/// Mean over rows of log(1 - min(ema_i . p_i, 1 - kPrClamp)); `ema` is constant.
LossResult pr_loss(const MatD& probs, const MatD& ema);

struct BaseResult {
  double value = 0.0;
  double ce_labeled = 0.0;
  double ce_pseudo = 0.0;
  double info_max = 0.0;
  MatD grad_labeled;
  MatD grad_unlabeled;
};

/// Cross-entropy on labeled rows, cross-entropy on pseudo-labeled rows, and
/// the information-maximization term mean_i H(p_i) - H(mean_i p_i). The batch
/// mean is taken over `unlabeled_probs`. Either block may be empty.
BaseResult base_loss(const MatD& labeled_probs, std::span<const int> labels,
                     const MatD& unlabeled_probs, std::span<const int> pseudo_labels);

struct LossParts {
  double base = 0.0;
  double pwc = 0.0;
  double rmc = 0.0;
  double pr = 0.0;
};

/// base + lambda_pwc * pwc + lambda_rmc * rmc + lambda_pr * pr. Throws
/// TrainingAbort naming the first non-finite part.
double total_loss(const LossParts& parts, const LossWeights& weights);

/// Shannon entropy with the log clamp used throughout.
double entropy(std::span<const double> p);

}  // namespace souf::losses

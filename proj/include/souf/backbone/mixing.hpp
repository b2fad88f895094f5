#pragma once

#include <random>
#include <vector>

#include "souf/backbone/vit.hpp"
#include "souf/data/dataset.hpp"

namespace souf::backbone {

/// Patch-level mixing of two samples: patch n of the mixed image is
/// lambdas[n] * x_i + (1 - lambdas[n]) * x_j.
struct MixSpec {
  int i = 0;
  int j = 0;
  std::vector<double> lambdas;
  double beta = 1.0;
  double gamma = 1.0;

  void validate(int num_patches) const;
};

/// Beta(beta, gamma) draws, i.i.d. per patch.
std::vector<double> sample_patch_lambdas(int num_patches, double beta, double gamma,
                                         std::mt19937_64& rng);

data::Image mix_patches(const data::Image& x_i, const data::Image& x_j, const MixSpec& spec,
                        int patch_size);

inline constexpr double kLambdaHatEps = 1e-8;

/// Attention-rescaled share of component i in a mixed sample:
///   sum_n l_n a_in / (sum_n l_n a_in + sum_n (1 - l_n) a_jn).
/// The denominator is floored at kLambdaHatEps.
double lambda_hat(const MixSpec& spec, const AttentionSummary& attn_i,
                  const AttentionSummary& attn_j);

/// lambda_hat when both components are read from the mixed image's own pass.
inline double lambda_hat(const MixSpec& spec, const AttentionSummary& mixed) {
  return lambda_hat(spec, mixed, mixed);
}

}  // namespace souf::backbone

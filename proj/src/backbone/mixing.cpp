#include "souf/backbone/mixing.hpp"

#include <algorithm>
#include <cmath>

namespace souf::backbone {

void MixSpec::validate(int num_patches) const {
  if (static_cast<int>(lambdas.size()) != num_patches)
    throw ValidationError("MixSpec: expected " + std::to_string(num_patches) + " lambdas, got " +
                          std::to_string(lambdas.size()));
  for (double l : lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("MixSpec: lambda outside [0, 1]");
}

std::vector<double> sample_patch_lambdas(int num_patches, double beta, double gamma,
                                         std::mt19937_64& rng) {
  if (!(beta > 0.0) || !(gamma > 0.0)) throw ConfigError("Beta parameters must be positive", "beta");
  std::gamma_distribution<double> ga(beta, 1.0);
  std::gamma_distribution<double> gb(gamma, 1.0);
  std::vector<double> out(static_cast<std::size_t>(num_patches));
  for (double& l : out) {
    const double a = ga(rng);
    const double b = gb(rng);
    l = a + b > 0.0 ? a / (a + b) : 0.5;
  }
  return out;
}

data::Image mix_patches(const data::Image& x_i, const data::Image& x_j, const MixSpec& spec,
                        int patch_size) {
  if (!x_i.same_shape(x_j)) throw ValidationError("mix_patches: component shapes differ");
  if (patch_size < 1 || x_i.height % patch_size != 0 || x_i.width % patch_size != 0)
    throw ValidationError("mix_patches: image size not divisible by patch size");
  const int grid_w = x_i.width / patch_size;
  spec.validate((x_i.height / patch_size) * grid_w);

  data::Image out(x_i.channels, x_i.height, x_i.width);
  for (int c = 0; c < x_i.channels; ++c)
    for (int y = 0; y < x_i.height; ++y)
      for (int x = 0; x < x_i.width; ++x) {
        const double l = spec.lambdas[std::size_t((y / patch_size) * grid_w + x / patch_size)];
        out.at(c, y, x) = static_cast<float>(l * x_i.at(c, y, x) + (1.0 - l) * x_j.at(c, y, x));
      }
  return out;
}

double lambda_hat(const MixSpec& spec, const AttentionSummary& attn_i,
                  const AttentionSummary& attn_j) {
  const std::size_t m = spec.lambdas.size();
  if (attn_i.scores.size() != m || attn_j.scores.size() != m)
    throw ValidationError("lambda_hat: attention length differs from patch count");
  double share_i = 0.0;
  double share_j = 0.0;
  for (std::size_t n = 0; n < m; ++n) {
    share_i += spec.lambdas[n] * attn_i.scores[n];
    share_j += (1.0 - spec.lambdas[n]) * attn_j.scores[n];
  }
  const double denom = share_i + share_j;
  if (!std::isfinite(denom) || denom < 0.0)
    throw NumericalError("lambda_hat: invalid attention mass");
  return std::clamp(share_i / std::max(denom, kLambdaHatEps), 0.0, 1.0);
}

}  // namespace souf::backbone

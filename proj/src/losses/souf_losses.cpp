#include "souf/losses/souf_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace souf::losses {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

// d/dp of log(max(p, eps)).
double clamped_log_grad(double p) { return p >= kLogClamp ? 1.0 / p : 0.0; }

std::span<const double> row_span(const MatD& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), std::size_t(m.cols())};
}

void check_rows(const MatD& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j))) throw ValidationError(std::string(what) + ": non-finite entry");
}

// Shared core of both contrastive losses. Anchors are rows of `a`, candidates
// rows of `c`; `exclude_diagonal` drops j == i from the partition function
// (anchors and candidates are the same rows). Returns the loss and fills
// d(loss)/d(similarity).
double contrastive_core(const MatD& sim, const MatD& weights, double tau, bool exclude_diagonal,
                        MatD& dsim) {
  const Eigen::Index n = sim.rows();
  const Eigen::Index m = sim.cols();
  std::vector<double> row_loss(std::size_t(n), 0.0);
  std::vector<long> row_pairs(std::size_t(n), 0);
  dsim.setZero(n, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -1e300;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!(exclude_diagonal && j == i)) mx = std::max(mx, sim(i, j) / tau);
    double z = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!(exclude_diagonal && j == i)) z += std::exp(sim(i, j) / tau - mx);
    const double lse = mx + std::log(z);
    double wsum = 0.0;
    double acc = 0.0;
    long pairs = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double w = weights(i, k);
      if (w == 0.0 || (exclude_diagonal && k == i)) continue;
      acc += w * (lse - sim(i, k) / tau);
      wsum += w;
      ++pairs;
      dsim(i, k) -= w / tau;
    }
    if (wsum != 0.0) {
      for (Eigen::Index j = 0; j < m; ++j)
        if (!(exclude_diagonal && j == i)) dsim(i, j) += wsum * std::exp(sim(i, j) / tau - lse) / tau;
    }
    row_loss[std::size_t(i)] = acc;
    row_pairs[std::size_t(i)] = pairs;
  }
  const long pairs = std::accumulate(row_pairs.begin(), row_pairs.end(), 0L);
  if (pairs == 0) {
    dsim.setZero();
    return 0.0;
  }
  dsim /= double(pairs);
  return std::accumulate(row_loss.begin(), row_loss.end(), 0.0) / double(pairs);
}

}  // namespace

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0", "tau");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)", "alpha");
  if (lambda_pwc < 0.0) throw ConfigError("lambda_pwc must be >= 0", "lambda_pwc");
  if (lambda_rmc < 0.0) throw ConfigError("lambda_rmc must be >= 0", "lambda_rmc");
  if (lambda_pr < 0.0) throw ConfigError("lambda_pr must be >= 0", "lambda_pr");
}

LossWeights LossWeights::from_config(const ConfigFile& cfg) {
  LossWeights w;
  w.tau = cfg.require_double("loss", "tau");
  w.lambda_pwc = cfg.require_double("loss", "lambda_pwc");
  w.lambda_rmc = cfg.require_double("loss", "lambda_rmc");
  w.lambda_pr = cfg.require_double("loss", "lambda_pr");
  w.alpha = cfg.require_double("loss", "alpha");
  w.validate();
  return w;
}

double adaptive_weight(std::span<const double> p_i, std::span<const double> p_k, int cat_i,
                       int cat_k, bool same_index) {
  if (same_index) return 1.0;
  if (cat_i != cat_k) return 0.0;
  double dot = 0.0;
  for (std::size_t c = 0; c < p_i.size(); ++c) dot += p_i[c] * p_k[c];
  return dot;
}

MatD pwc_weights(const MatD& probs, const CategoryAssignment& cats) {
  const Eigen::Index rows = probs.rows();
  if (rows % 2 != 0) throw ValidationError("pwc: row count must be even (weak || strong views)");
  if (Eigen::Index(cats.labels.size()) != rows)
    throw ValidationError("pwc: category count does not match rows");
  const Eigen::Index half = rows / 2;
  MatD w = MatD::Zero(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i) continue;
      const bool same_sample = (i % half) == (k % half);
      w(i, k) = adaptive_weight(row_span(probs, i), row_span(probs, k), cats.labels[std::size_t(i)],
                                cats.labels[std::size_t(k)], same_sample);
    }
  return w;
}

LossResult pwc_loss_weighted(const MatD& probs, const MatD& weights, double tau) {
  if (probs.rows() < 2) throw ValidationError("pwc: need at least two rows (no negatives exist)");
  if (weights.rows() != probs.rows() || weights.cols() != probs.rows())
    throw ValidationError("pwc: weight matrix shape mismatch");
  if (!(tau > 0.0)) throw ValidationError("pwc: tau must be positive");
  check_rows(probs, "pwc");
  const MatD sim = probs * probs.transpose();
  MatD dsim;
  LossResult out;
  out.value = contrastive_core(sim, weights, tau, true, dsim);
  out.grad = dsim * probs + dsim.transpose() * probs;
  return out;
}

LossResult pwc_loss(const MatD& probs, const CategoryAssignment& cats, double tau) {
  if (probs.rows() < 2) throw ValidationError("pwc: need at least two rows (no negatives exist)");
  return pwc_loss_weighted(probs, pwc_weights(probs, cats), tau);
}

LossResult mixup_ce_loss(const MatD& mixed_probs, std::span<const int> y_i,
                         std::span<const int> y_j, std::span<const double> lam_hat) {
  const Eigen::Index n = mixed_probs.rows();
  if (Eigen::Index(y_i.size()) != n || Eigen::Index(y_j.size()) != n ||
      Eigen::Index(lam_hat.size()) != n)
    throw ValidationError("mixup_ce: label/coefficient count does not match rows");
  LossResult out;
  out.grad.setZero(n, mixed_probs.cols());
  if (n == 0) return out;
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double l = lam_hat[std::size_t(k)];
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("mixup_ce: lam_hat outside [0, 1]");
    const int a = y_i[std::size_t(k)];
    const int b = y_j[std::size_t(k)];
    if (a < 0 || b < 0 || a >= mixed_probs.cols() || b >= mixed_probs.cols())
      throw ValidationError("mixup_ce: label out of range");
    total -= l * clamped_log(mixed_probs(k, a)) + (1.0 - l) * clamped_log(mixed_probs(k, b));
    out.grad(k, a) -= l * clamped_log_grad(mixed_probs(k, a)) / double(n);
    out.grad(k, b) -= (1.0 - l) * clamped_log_grad(mixed_probs(k, b)) / double(n);
  }
  out.value = total / double(n);
  return out;
}

MixWeights mixup_contrastive_weights(const MatD& mixed_probs, const MatD& component_probs,
                                     std::span<const MixPairing> pairing,
                                     std::span<const int> component_cats) {
  const Eigen::Index n = mixed_probs.rows();
  const Eigen::Index r = component_probs.rows();
  if (Eigen::Index(pairing.size()) != n) throw ValidationError("mix_con: pairing count mismatch");
  if (Eigen::Index(component_cats.size()) != r)
    throw ValidationError("mix_con: component category count mismatch");
  MixWeights w{MatD::Zero(n, r), MatD::Zero(n, r)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const MixPairing pr = pairing[std::size_t(k)];
    if (pr.i < 0 || pr.j < 0 || pr.i >= r || pr.j >= r)
      throw ValidationError("mix_con: pairing index out of range");
    const int cat_i = component_cats[std::size_t(pr.i)];
    const int cat_j = component_cats[std::size_t(pr.j)];
    for (Eigen::Index c = 0; c < r; ++c) {
      const int cat_c = component_cats[std::size_t(c)];
      w.toward_i(k, c) = adaptive_weight(row_span(mixed_probs, k), row_span(component_probs, c),
                                         cat_i, cat_c, c == pr.i);
      w.toward_j(k, c) = adaptive_weight(row_span(mixed_probs, k), row_span(component_probs, c),
                                         cat_j, cat_c, c == pr.j);
    }
  }
  return w;
}

ContrastiveResult mixup_contrastive_loss_weighted(const MatD& mixed_probs,
                                                  const MatD& component_probs,
                                                  const MixWeights& weights,
                                                  std::span<const double> lam_hat, double tau) {
  const Eigen::Index n = mixed_probs.rows();
  const Eigen::Index r = component_probs.rows();
  if (r < 2) throw ValidationError("mix_con: need at least two component rows");
  if (Eigen::Index(lam_hat.size()) != n) throw ValidationError("mix_con: lam_hat count mismatch");
  if (weights.toward_i.rows() != n || weights.toward_i.cols() != r ||
      weights.toward_j.rows() != n || weights.toward_j.cols() != r)
    throw ValidationError("mix_con: weight shape mismatch");
  if (!(tau > 0.0)) throw ValidationError("mix_con: tau must be positive");
  check_rows(mixed_probs, "mix_con");
  check_rows(component_probs, "mix_con");

  // Pairs are counted per term so that a vanishing coefficient removes its
  // term from the normalizer as well.
  MatD effective(n, r);
  long pairs = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double l = lam_hat[std::size_t(k)];
    for (Eigen::Index c = 0; c < r; ++c) {
      const double a = l * weights.toward_i(k, c);
      const double b = (1.0 - l) * weights.toward_j(k, c);
      pairs += (a != 0.0) + (b != 0.0);
      effective(k, c) = a + b;
    }
  }
  ContrastiveResult out;
  const MatD sim = mixed_probs * component_probs.transpose();
  MatD dsim;
  // contrastive_core normalizes by its own count of nonzero entries; rescale to
  // the per-term count.
  const double core = contrastive_core(sim, effective, tau, false, dsim);
  long core_pairs = 0;
  for (Eigen::Index i = 0; i < effective.size(); ++i) core_pairs += effective.data()[i] != 0.0;
  if (pairs == 0 || core_pairs == 0) {
    out.grad_mixed.setZero(n, mixed_probs.cols());
    out.grad_components.setZero(r, component_probs.cols());
    return out;
  }
  const double rescale = double(core_pairs) / double(pairs);
  out.value = core * rescale;
  dsim *= rescale;
  out.grad_mixed = dsim * component_probs;
  out.grad_components = dsim.transpose() * mixed_probs;
  return out;
}

ContrastiveResult mixup_contrastive_loss(const MatD& mixed_probs, const MatD& component_probs,
                                         std::span<const MixPairing> pairing,
                                         std::span<const double> lam_hat,
                                         std::span<const int> component_cats, double tau) {
  if (component_probs.rows() < 2) throw ValidationError("mix_con: need at least two component rows");
  return mixup_contrastive_loss_weighted(
      mixed_probs, component_probs,
      mixup_contrastive_weights(mixed_probs, component_probs, pairing, component_cats), lam_hat,
      tau);
}

RmcResult rmc_loss(const MatD& mixed_probs, const MatD& component_probs,
                   std::span<const MixPairing> pairing, std::span<const double> lam_hat,
                   std::span<const int> component_labels, double tau) {
  std::vector<int> y_i;
  std::vector<int> y_j;
  for (const auto& p : pairing) {
    if (p.i < 0 || p.j < 0 || std::size_t(p.i) >= component_labels.size() ||
        std::size_t(p.j) >= component_labels.size())
      throw ValidationError("rmc: pairing index out of range");
    y_i.push_back(component_labels[std::size_t(p.i)]);
    y_j.push_back(component_labels[std::size_t(p.j)]);
  }
  const LossResult ce = mixup_ce_loss(mixed_probs, y_i, y_j, lam_hat);
  ContrastiveResult con =
      mixup_contrastive_loss(mixed_probs, component_probs, pairing, lam_hat, component_labels, tau);
  RmcResult out;
  out.mix_ce = ce.value;
  out.mix_con = con.value;
  out.value = ce.value + con.value;
  out.grad_mixed = ce.grad + con.grad_mixed;
  out.grad_components = std::move(con.grad_components);
  return out;
}

LossResult pr_loss(const MatD& probs, const MatD& ema) {
  if (probs.rows() != ema.rows() || probs.cols() != ema.cols())
    throw ValidationError("pr: prediction and EMA shapes differ");
  const Eigen::Index n = probs.rows();
  LossResult out;
  out.grad.setZero(n, probs.cols());
  if (n == 0) return out;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dot = probs.row(i).dot(ema.row(i));
    const double capped = std::min(dot, 1.0 - kPrClamp);
    total += std::log(1.0 - capped);
    if (dot < 1.0 - kPrClamp) out.grad.row(i) = -ema.row(i) / ((1.0 - dot) * double(n));
  }
  out.value = total / double(n);
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= v * clamped_log(v);
  return h;
}

BaseResult base_loss(const MatD& labeled_probs, std::span<const int> labels,
                     const MatD& unlabeled_probs, std::span<const int> pseudo_labels) {
  if (Eigen::Index(labels.size()) != labeled_probs.rows())
    throw ValidationError("base: label count does not match labeled rows");
  if (Eigen::Index(pseudo_labels.size()) != unlabeled_probs.rows())
    throw ValidationError("base: pseudo-label count does not match unlabeled rows");
  BaseResult out;
  out.grad_labeled.setZero(labeled_probs.rows(), labeled_probs.cols());
  out.grad_unlabeled.setZero(unlabeled_probs.rows(), unlabeled_probs.cols());

  auto cross_entropy = [](const MatD& p, std::span<const int> y, MatD& grad) {
    const Eigen::Index n = p.rows();
    if (n == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = y[std::size_t(i)];
      if (c < 0 || c >= p.cols()) throw ValidationError("base: label out of range");
      total -= clamped_log(p(i, c));
      grad(i, c) -= clamped_log_grad(p(i, c)) / double(n);
    }
    return total / double(n);
  };
  out.ce_labeled = cross_entropy(labeled_probs, labels, out.grad_labeled);
  out.ce_pseudo = cross_entropy(unlabeled_probs, pseudo_labels, out.grad_unlabeled);

  const Eigen::Index n = unlabeled_probs.rows();
  if (n > 0) {
    const Eigen::RowVectorXd mean = unlabeled_probs.colwise().mean();
    double cond = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cond += entropy(row_span(unlabeled_probs, i));
    cond /= double(n);
    const double marginal = entropy({mean.data(), std::size_t(mean.size())});
    out.info_max = cond - marginal;
    // d/dp of -p log(max(p, eps)) is -(log p + 1) above the clamp, -log eps below.
    auto dneg_entropy = [](double p) { return p >= kLogClamp ? std::log(p) + 1.0 : std::log(kLogClamp); };
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < unlabeled_probs.cols(); ++c)
        out.grad_unlabeled(i, c) +=
            (-dneg_entropy(unlabeled_probs(i, c)) + dneg_entropy(mean(c))) / double(n);
  }
  out.value = out.ce_labeled + out.ce_pseudo + out.info_max;
  return out;
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  const std::pair<const char*, double> named[] = {
      {"loss_base", parts.base}, {"loss_pwc", parts.pwc}, {"loss_rmc", parts.rmc}, {"loss_pr", parts.pr}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value))
      throw TrainingAbort(std::string("non-finite ") + name + " in the total objective", name);
  return parts.base + weights.lambda_pwc * parts.pwc + weights.lambda_rmc * parts.rmc +
         weights.lambda_pr * parts.pr;
}

}  // namespace souf::losses

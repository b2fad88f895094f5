#pragma once

// Naive scalar re-statements of the objectives, written against plain nested
// vectors so they share no code with the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "souf/common.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const souf::MatD& m) {
  Rows r(std::size_t(m.rows()), std::vector<double>(std::size_t(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[std::size_t(i)][std::size_t(j)] = m(i, j);
  return r;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

inline double safe_log(double p) { return std::log(p < 1e-12 ? 1e-12 : p); }

inline double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p) h -= v * safe_log(v);
  return h;
}

// Weak rows 0..N-1, strong rows N..2N-1.
inline double pwc(const Rows& p, const std::vector<int>& cat, double tau) {
  const std::size_t rows = p.size(), n = rows / 2;
  double total = 0;
  long count = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      double w;
      if (i % n == k % n) w = 1;
      else if (cat[i] == cat[k]) w = dot(p[i], p[k]);
      else w = 0;
      if (w == 0) continue;
      double denom = 0;
      for (std::size_t j = 0; j < rows; ++j)
        if (j != i) denom += std::exp(dot(p[i], p[j]) / tau);
      total += -w * std::log(std::exp(dot(p[i], p[k]) / tau) / denom);
      ++count;
    }
  return count ? total / double(count) : 0.0;
}

// Same sum with caller-supplied weights (weights held fixed for differentiation).
inline double pwc_weighted(const Rows& p, const Rows& w, double tau) {
  const std::size_t rows = p.size();
  double total = 0;
  long count = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i || w[i][k] == 0) continue;
      double denom = 0;
      for (std::size_t j = 0; j < rows; ++j)
        if (j != i) denom += std::exp(dot(p[i], p[j]) / tau);
      total += -w[i][k] * std::log(std::exp(dot(p[i], p[k]) / tau) / denom);
      ++count;
    }
  return count ? total / double(count) : 0.0;
}

inline double mixup_ce(const Rows& p, const std::vector<int>& yi, const std::vector<int>& yj,
                       const std::vector<double>& lam) {
  double total = 0;
  for (std::size_t k = 0; k < p.size(); ++k)
    total += -(lam[k] * safe_log(p[k][std::size_t(yi[k])]) +
               (1 - lam[k]) * safe_log(p[k][std::size_t(yj[k])]));
  return p.empty() ? 0.0 : total / double(p.size());
}

// Anchors: mixed rows. Candidates: every component row.
inline double mixup_con_weighted(const Rows& mix, const Rows& comp, const Rows& wi, const Rows& wj,
                                 const std::vector<double>& lam, double tau) {
  double total = 0;
  long count = 0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    double denom = 0;
    for (std::size_t j = 0; j < comp.size(); ++j) denom += std::exp(dot(mix[k], comp[j]) / tau);
    for (std::size_t c = 0; c < comp.size(); ++c) {
      const double nll = -std::log(std::exp(dot(mix[k], comp[c]) / tau) / denom);
      const double a = lam[k] * wi[k][c];
      const double b = (1 - lam[k]) * wj[k][c];
      if (a != 0) { total += a * nll; ++count; }
      if (b != 0) { total += b * nll; ++count; }
    }
  }
  return count ? total / double(count) : 0.0;
}

inline double mix_weight(const std::vector<double>& anchor, const std::vector<double>& cand,
                         int anchor_cat, int cand_cat, bool same) {
  if (same) return 1;
  return anchor_cat == cand_cat ? dot(anchor, cand) : 0;
}

inline double mixup_con(const Rows& mix, const Rows& comp, const std::vector<std::pair<int, int>>& pairs,
                        const std::vector<double>& lam, const std::vector<int>& cats, double tau) {
  Rows wi(mix.size(), std::vector<double>(comp.size())), wj = wi;
  for (std::size_t k = 0; k < mix.size(); ++k)
    for (std::size_t c = 0; c < comp.size(); ++c) {
      const auto [a, b] = pairs[k];
      wi[k][c] = mix_weight(mix[k], comp[c], cats[std::size_t(a)], cats[c], int(c) == a);
      wj[k][c] = mix_weight(mix[k], comp[c], cats[std::size_t(b)], cats[c], int(c) == b);
    }
  return mixup_con_weighted(mix, comp, wi, wj, lam, tau);
}

inline double pr(const Rows& p, const Rows& ema) {
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double d = dot(p[i], ema[i]);
    if (d > 1 - 1e-6) d = 1 - 1e-6;
    total += std::log(1 - d);
  }
  return p.empty() ? 0.0 : total / double(p.size());
}

inline double base(const Rows& pl, const std::vector<int>& y, const Rows& pu,
                   const std::vector<int>& pseudo) {
  double ce_l = 0, ce_u = 0;
  for (std::size_t i = 0; i < pl.size(); ++i) ce_l -= safe_log(pl[i][std::size_t(y[i])]);
  for (std::size_t i = 0; i < pu.size(); ++i) ce_u -= safe_log(pu[i][std::size_t(pseudo[i])]);
  if (!pl.empty()) ce_l /= double(pl.size());
  double im = 0;
  if (!pu.empty()) {
    ce_u /= double(pu.size());
    std::vector<double> mean(pu[0].size(), 0.0);
    double cond = 0;
    for (const auto& row : pu) {
      cond += entropy(row);
      for (std::size_t c = 0; c < row.size(); ++c) mean[c] += row[c] / double(pu.size());
    }
    im = cond / double(pu.size()) - entropy(mean);
  }
  return ce_l + ce_u + im;
}

// Random point on the simplex, kept away from the log clamp.
inline std::vector<double> simplex(int c, std::mt19937_64& rng, double floor = 1e-3) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(c));
  double s = 0;
  for (auto& v : p) s += (v = g(rng) + floor);
  for (auto& v : p) v /= s;
  return p;
}

inline souf::MatD simplex_matrix(int rows, int c, std::mt19937_64& rng) {
  souf::MatD m(rows, c);
  for (int i = 0; i < rows; ++i) {
    const auto p = simplex(c, rng);
    for (int j = 0; j < c; ++j) m(i, j) = p[std::size_t(j)];
  }
  return m;
}

// Central differences of f at x, one entry at a time.
template <class F>
souf::MatD numeric_grad(F&& f, souf::MatD x, double h = 1e-5) {
  souf::MatD g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double old = x.data()[i];
    x.data()[i] = old + h;
    const double up = f(x);
    x.data()[i] = old - h;
    const double down = f(x);
    x.data()[i] = old;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

// Largest entrywise relative error; magnitudes below `floor` are compared absolutely.
inline double max_rel_error(const souf::MatD& analytic, const souf::MatD& numeric,
                            double floor = 1e-6) {
  double worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = numeric.data()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

}  // namespace oracle

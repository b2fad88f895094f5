// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <malloc.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "souf/backbone/mixing.hpp"
#include "souf/cli/commands.hpp"
#include "souf/data/batching.hpp"
#include "souf/engine/prediction_store.hpp"
#include "souf/engine/reliable_set.hpp"
#include "souf/losses/souf_losses.hpp"

namespace fs = std::filesystem;
using namespace souf;
using namespace souf::losses;

namespace {

const fs::path kConfigDir = SOUF_CONFIG_DIR;
const fs::path kOut = SOUF_ACCEPTANCE_OUT;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::mt19937_64 rng_for(int criterion) { return std::mt19937_64(1000 + criterion); }

int uniform(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<int> random_cats(int n, int c, std::mt19937_64& rng) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = uniform(rng, 0, c - 1);
  return v;
}

std::vector<double> random_unit(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

// Distinct (i, j) component pairs for `mixed` rows over `comps` components.
std::vector<MixPairing> random_pairs(int mixed, int comps, std::mt19937_64& rng) {
  std::vector<MixPairing> out;
  for (int k = 0; k < mixed; ++k) {
    const int a = uniform(rng, 0, comps - 1);
    int b = uniform(rng, 0, comps - 2);
    if (b >= a) ++b;
    out.push_back({a, b});
  }
  return out;
}

std::vector<std::pair<int, int>> as_pairs(const std::vector<MixPairing>& p) {
  std::vector<std::pair<int, int>> out;
  for (const auto& x : p) out.emplace_back(x.i, x.j);
  return out;
}

void worst(double& acc, double v) { acc = std::max(acc, std::isfinite(v) ? v : 1e300); }

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  auto rng = rng_for(1);
  constexpr int kTrials = 200;
  constexpr double kTol = 1e-6;
  double e_pwc = 0, e_ce = 0, e_con = 0, e_pr = 0, e_base = 0;
  for (int t = 0; t < kTrials; ++t) {
    const int c = uniform(rng, 2, 5);
    {
      const int n = uniform(rng, 1, 4);
      const MatD p = oracle::simplex_matrix(2 * n, c, rng);
      auto cats = random_cats(n, c, rng);
      cats.insert(cats.end(), cats.begin(), cats.begin() + n);
      worst(e_pwc, std::abs(pwc_loss(p, {cats}, 0.15).value - oracle::pwc(oracle::to_rows(p), cats, 0.15)));
    }
    {
      const int b = uniform(rng, 1, 8);
      const MatD p = oracle::simplex_matrix(b, c, rng);
      const auto yi = random_cats(b, c, rng), yj = random_cats(b, c, rng);
      const auto lam = random_unit(b, rng);
      worst(e_ce, std::abs(mixup_ce_loss(p, yi, yj, lam).value - oracle::mixup_ce(oracle::to_rows(p), yi, yj, lam)));
    }
    {
      const int b = uniform(rng, 1, 8), m = uniform(rng, 2, 8);
      const MatD mix = oracle::simplex_matrix(b, c, rng), comp = oracle::simplex_matrix(m, c, rng);
      const auto pairs = random_pairs(b, m, rng);
      const auto cats = random_cats(m, c, rng);
      const auto lam = random_unit(b, rng);
      worst(e_con, std::abs(mixup_contrastive_loss(mix, comp, pairs, lam, cats, 0.15).value -
                            oracle::mixup_con(oracle::to_rows(mix), oracle::to_rows(comp), as_pairs(pairs), lam,
                                              cats, 0.15)));
    }
    {
      const int b = uniform(rng, 1, 8);
      const MatD p = oracle::simplex_matrix(b, c, rng), e = oracle::simplex_matrix(b, c, rng);
      worst(e_pr, std::abs(pr_loss(p, e).value - oracle::pr(oracle::to_rows(p), oracle::to_rows(e))));
    }
    {
      const int bl = uniform(rng, 0, 8), bu = uniform(rng, 1, 8);
      const MatD pl = oracle::simplex_matrix(bl, c, rng), pu = oracle::simplex_matrix(bu, c, rng);
      const auto y = random_cats(bl, c, rng), ps = random_cats(bu, c, rng);
      worst(e_base, std::abs(base_loss(pl, y, pu, ps).value -
                             oracle::base(oracle::to_rows(pl), y, oracle::to_rows(pu), ps)));
    }
  }
  const double w = std::max({e_pwc, e_ce, e_con, e_pr, e_base});
  std::ostringstream d;
  d << "max |lib - oracle| over " << kTrials << " trials: pwc " << e_pwc << ", mixup_ce " << e_ce
    << ", mixup_con " << e_con << ", pr " << e_pr << ", base " << e_base;
  return {w < kTol, d.str()};
}

Outcome gradient_checks() {
  auto rng = rng_for(2);
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-4;
  double e_pwc = 0, e_ce = 0, e_con = 0, e_pr = 0, e_base = 0;
  using oracle::max_rel_error;
  using oracle::numeric_grad;
  for (int t = 0; t < kInstances; ++t) {
    const int c = uniform(rng, 2, 5);
    {
      const int n = uniform(rng, 1, 4);
      const MatD p = oracle::simplex_matrix(2 * n, c, rng);
      auto cats = random_cats(n, c, rng);
      cats.insert(cats.end(), cats.begin(), cats.begin() + n);
      const MatD w = pwc_weights(p, {cats});
      const auto num = numeric_grad([&](const MatD& x) { return pwc_loss_weighted(x, w, 0.15).value; }, p);
      worst(e_pwc, max_rel_error(pwc_loss_weighted(p, w, 0.15).grad, num));
    }
    {
      const int b = uniform(rng, 1, 8);
      const MatD p = oracle::simplex_matrix(b, c, rng);
      const auto yi = random_cats(b, c, rng), yj = random_cats(b, c, rng);
      const auto lam = random_unit(b, rng);
      const auto num = numeric_grad([&](const MatD& x) { return mixup_ce_loss(x, yi, yj, lam).value; }, p);
      worst(e_ce, max_rel_error(mixup_ce_loss(p, yi, yj, lam).grad, num));
    }
    {
      const int b = uniform(rng, 1, 8), m = uniform(rng, 2, 8);
      const MatD mix = oracle::simplex_matrix(b, c, rng), comp = oracle::simplex_matrix(m, c, rng);
      const auto pairs = random_pairs(b, m, rng);
      const auto cats = random_cats(m, c, rng);
      const auto lam = random_unit(b, rng);
      const auto w = mixup_contrastive_weights(mix, comp, pairs, cats);
      const auto r = mixup_contrastive_loss_weighted(mix, comp, w, lam, 0.15);
      const auto nm = numeric_grad(
          [&](const MatD& x) { return mixup_contrastive_loss_weighted(x, comp, w, lam, 0.15).value; }, mix);
      const auto nc = numeric_grad(
          [&](const MatD& x) { return mixup_contrastive_loss_weighted(mix, x, w, lam, 0.15).value; }, comp);
      worst(e_con, std::max(max_rel_error(r.grad_mixed, nm), max_rel_error(r.grad_components, nc)));
    }
    {
      const int b = uniform(rng, 1, 8);
      const MatD p = oracle::simplex_matrix(b, c, rng), e = oracle::simplex_matrix(b, c, rng);
      const auto num = numeric_grad([&](const MatD& x) { return pr_loss(x, e).value; }, p);
      worst(e_pr, max_rel_error(pr_loss(p, e).grad, num));
    }
    {
      const int bl = uniform(rng, 1, 8), bu = uniform(rng, 1, 8);
      const MatD pl = oracle::simplex_matrix(bl, c, rng), pu = oracle::simplex_matrix(bu, c, rng);
      const auto y = random_cats(bl, c, rng), ps = random_cats(bu, c, rng);
      const auto r = base_loss(pl, y, pu, ps);
      const auto nl = numeric_grad([&](const MatD& x) { return base_loss(x, y, pu, ps).value; }, pl);
      const auto nu = numeric_grad([&](const MatD& x) { return base_loss(pl, y, x, ps).value; }, pu);
      worst(e_base, std::max(max_rel_error(r.grad_labeled, nl), max_rel_error(r.grad_unlabeled, nu)));
    }
  }
  const double w = std::max({e_pwc, e_ce, e_con, e_pr, e_base});
  std::ostringstream d;
  d << "max relative error over " << kInstances << " instances: pwc " << e_pwc << ", mixup_ce " << e_ce
    << ", mixup_con " << e_con << ", pr " << e_pr << ", base " << e_base;
  return {w < kTol, d.str()};
}

Outcome spot_values() {
  constexpr double kTol = 1e-9;
  std::ostringstream d;
  bool ok = true;
  auto check = [&](const char* name, double got, double want) {
    const bool good = std::abs(got - want) <= kTol;
    ok = ok && good;
    d << name << " " << got << (good ? "" : " (want " + std::to_string(want) + ")") << "; ";
  };
  const std::vector<double> a{0.2, 0.5, 0.3}, b{0.6, 0.1, 0.3};
  check("w(same)", adaptive_weight(a, b, 0, 2, true), 1.0);
  check("w(dot)", adaptive_weight(a, b, 1, 1, false), 0.2 * 0.6 + 0.5 * 0.1 + 0.3 * 0.3);
  check("w(other)", adaptive_weight(a, b, 0, 1, false), 0.0);
  check("lambda_hat", backbone::lambda_hat({0, 1, {1.0, 0.0}}, {{2.0, 1.0}}, {{3.0, 1.0}}), 2.0 / 3.0);
  MatD uniform_p = MatD::Constant(1, 10, 0.1), hot = MatD::Zero(1, 10);
  hot(0, 7) = 1.0;
  check("pr", pr_loss(uniform_p, hot).value, std::log(0.9));
  check("total", total_loss({1, 1, 1, 1}, LossWeights{}), 4.2);
  return {ok, d.str()};
}

// Splits whose labeled part has `shots` per class and whose pseudo-labels
// leave some classes empty or thin.
Outcome structural_laws() {
  auto rng = rng_for(4);
  std::ostringstream d;
  bool ok = true;

  // Reliable-set cardinality against a direct count.
  int rs_cases = 0, rs_bad = 0;
  for (int t = 0; t < 60; ++t) {
    data::ShiftConfig sc;
    sc.num_classes = uniform(rng, 2, 5);
    sc.image_size = 8;
    sc.patch_size = 4;
    sc.shots = uniform(rng, 1, 3);
    sc.n_unlabeled = 10 * sc.shots * sc.num_classes + uniform(rng, 0, 8);
    sc.n_source = 4 * sc.num_classes;
    sc.n_holdout = 0;
    sc.seed = std::uint64_t(t);
    const auto split = data::generate_synthetic_shift(sc);
    // Each class is dropped, thinned or kept.
    std::vector<int> mode = random_cats(sc.num_classes, 3, rng);
    if (t % 5 == 0) std::fill(mode.begin(), mode.end() - 1, 0);
    std::vector<int> allowed;
    for (int c = 0; c < sc.num_classes; ++c)
      if (mode[std::size_t(c)] != 0) allowed.push_back(c);
    if (allowed.empty()) allowed.push_back(0);
    engine::PseudoLabels pseudo;
    std::vector<int> pool(std::size_t(sc.num_classes), 0);
    std::uniform_real_distribution<double> h(0, 1);
    for (std::size_t k = 0; k < split.target_unlabeled.size(); ++k) {
      int c = allowed[std::size_t(uniform(rng, 0, int(allowed.size()) - 1))];
      if (mode[std::size_t(c)] == 1 && pool[std::size_t(c)] >= 1) c = allowed.front();
      ++pool[std::size_t(c)];
      pseudo[split.target_unlabeled[k].id] = {c, h(rng)};
    }
    for (int k = 0; k <= 4; ++k) {
      std::size_t want = split.target_labeled.size();
      for (int n : pool) want += std::size_t(std::min(k, n));
      const auto r = engine::build_reliable_set(pseudo, split, k);
      std::set<std::int64_t> ids;
      for (const auto& e : r.entries) ids.insert(e.sample->id);
      ++rs_cases;
      if (r.size() != want || ids.size() != r.size()) ++rs_bad;
    }
  }
  ok = ok && rs_bad == 0;
  d << "reliable set " << rs_cases - rs_bad << "/" << rs_cases << " cardinalities; ";

  // EMA rows stay on the simplex under arbitrary update sequences.
  double ema_sum_err = 0, ema_min = 1;
  for (int s = 0; s < 1000; ++s) {
    const int c = uniform(rng, 2, 5), n = uniform(rng, 1, 6);
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[std::size_t(i)] = 10 * i + s;
    std::uniform_real_distribution<double> al(0.01, 0.99);
    engine::PredictionStore st(ids, c, al(rng));
    const int steps = uniform(rng, 1, 30);
    std::gamma_distribution<double> g(0.2, 1.0);
    for (int u = 0; u < steps; ++u) {
      std::vector<std::int64_t> sub;
      for (auto id : ids)
        if (uniform(rng, 0, 1)) sub.push_back(id);
      if (sub.empty()) sub.push_back(ids.front());
      MatD p(Eigen::Index(sub.size()), c);
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (int k = 0; k < c; ++k) p(r, k) = g(rng);
        if (uniform(rng, 0, 9) == 0) p.row(r).setZero(), p(r, uniform(rng, 0, c - 1)) = 1;
        p.row(r) /= p.row(r).sum();
      }
      st.update(sub, p);
      if (uniform(rng, 0, 3) == 0) st.advance_epoch();
    }
    const MatD rows = st.rows(ids);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      ema_sum_err = std::max(ema_sum_err, std::abs(rows.row(r).sum() - 1.0));
      ema_min = std::min(ema_min, rows.row(r).minCoeff());
    }
  }
  const bool ema_ok = ema_sum_err < 1e-9 && ema_min >= 0;
  ok = ok && ema_ok;
  d << "EMA 1000 sequences max |sum-1| " << ema_sum_err << " min " << ema_min << "; ";

  // Classifier parameters unchanged by adaptation, encoder changed.
  auto cfg = cli::load_run_config(kConfigDir / "tiny.ini", std::nullopt);
  const auto split = data::generate_synthetic_shift(cfg.data);
  const auto src = engine::pretrain_source(split, cfg);
  const auto adapted = engine::adapt_target(split, src.model, cfg);
  const bool frozen = adapted.classifier_hash_before == src.model.classifier_hash() &&
                      adapted.classifier_hash_after == src.model.classifier_hash() &&
                      adapted.model.parameter_hash() != src.model.parameter_hash();
  ok = ok && frozen;
  d << "classifier hash " << (frozen ? "invariant" : "CHANGED") << "; ";

  // A zero-weighted part leaves gradients bit-identical to evaluating it at weight 0.
  engine::PseudoLabels pseudo;
  for (std::size_t k = 0; k < split.target_unlabeled.size(); ++k)
    pseudo[split.target_unlabeled[k].id] = {int(k % 4), double(k)};
  const auto reliable = engine::build_reliable_set(pseudo, split, 2);
  data::LoaderOptions lo;
  lo.batch_size = 8;
  lo.labeled_batch_size = 4;
  engine::StepBatch step;
  step.batch = data::EpochLoader(split, lo, 5).batch(0);
  for (const auto& p : step.batch.unlabeled.pairs) step.pseudo.push_back(pseudo.at(p.id).cls);
  step.ema = MatD::Constant(8, 4, 0.25);
  std::mt19937_64 mrng(4);
  step.mixed = engine::assemble_mixed_batch(reliable, 4, mrng, {});
  step.reliable = &reliable;
  backbone::VisionTransformer m(cfg.encoder, 1, kernels::Exec::serial);
  m.freeze_classifier();
  auto grads = [&] {
    std::vector<Mat> g;
    for (const auto* p : m.parameters()) g.push_back(p->grad);
    return g;
  };
  int nulled = 0;
  for (int drop = 0; drop < 3; ++drop) {
    LossWeights w;
    (drop == 0 ? w.lambda_pwc : drop == 1 ? w.lambda_rmc : w.lambda_pr) = 0.0;
    engine::adaptation_step(m, step, w);
    const auto skipped = grads();
    engine::adaptation_step(m, step, w, {.force_all = true});
    const auto forced = grads();
    bool same = true;
    for (std::size_t k = 0; k < skipped.size(); ++k) same = same && (skipped[k].array() == forced[k].array()).all();
    nulled += same;
  }
  ok = ok && nulled == 3;
  d << "toggle nullification " << nulled << "/3 parts";
  return {ok, d.str()};
}

// The full-SOUF and base-only rows of the ablation on the default config.
cli::AblationTable g_table;
bool g_table_ready = false;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = cli::load_run_config(kConfigDir / "default.ini", std::nullopt);
  fs::remove_all(kOut / "e2e");
  g_table = cli::run_ablation(cfg, kSeeds, {cli::Toggles::parse("none"), cli::Toggles::parse("all")},
                              kOut / "e2e", kernels::Exec::parallel);
  g_table_ready = true;
  cli::write_ablation_csv(g_table, kOut / "e2e" / "ablation.csv");
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;

  const auto& none = g_table.rows[0];
  const auto& all = g_table.rows[1];
  std::ostringstream d;
  d.precision(4);
  d << std::fixed;
  bool every_seed = !all.failed();
  double min_margin = 1e300;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    const double adapted = all.acc[s].value_or(0.0);
    const double margin = adapted - g_table.source_only[s];
    min_margin = std::min(min_margin, margin);
    every_seed = every_seed && margin > 0;
    d << "seed " << kSeeds[s] << " source-only " << g_table.source_only[s] << " -> all " << adapted
      << " (margin " << std::showpos << margin << std::noshowpos << "); ";
  }
  const bool ablation_ok = !none.failed() && !all.failed() && all.mean >= none.mean;
  d << (every_seed ? "" : "NOT every seed improved; ") << "mean none " << none.mean << " vs all "
    << all.mean << (ablation_ok ? "" : " (all < none)") << "; " << std::setprecision(1) << minutes
    << " min";
  const bool fast = minutes < 15;
  return {every_seed && ablation_ok && fast, d.str()};
}

Outcome determinism() {
  const auto cfg = cli::load_run_config(kConfigDir / "default.ini", std::uint64_t{0});
  const auto split = data::generate_synthetic_shift(cfg.data);
  const auto run = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto src = cli::pretrain_to(cfg, split, dir, kernels::Exec::parallel);
    cli::adapt_to(cfg, split, src, cli::Toggles{}, dir, false);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  fs::path first = kOut / "e2e" / "seed_0";
  std::string metrics_a;
  if (g_table_ready && fs::exists(first / "pwc+rmc+pr" / "metrics.ndjson")) {
    metrics_a = slurp(first / "pwc+rmc+pr" / "metrics.ndjson");
  } else {
    run(kOut / "det_a");
    first = kOut / "det_a";
    metrics_a = slurp(first / "metrics.ndjson");
  }
  run(kOut / "det_b");
  const auto metrics_b = slurp(kOut / "det_b" / "metrics.ndjson");
  const bool same_ckpt = slurp(first / "source.ckpt") == slurp(kOut / "det_b" / "source.ckpt");
  const bool ok = !metrics_a.empty() && metrics_a == metrics_b && same_ckpt;
  return {ok, "default config seed 0: metrics.ndjson " + std::to_string(metrics_a.size()) + " bytes " +
                  (metrics_a == metrics_b ? "identical" : "DIFFER") + ", source checkpoint " +
                  (same_ckpt ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  fs::create_directories(kOut);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 oracle equivalence of the five losses", oracle_equivalence},
      {"2 finite-difference gradient checks", gradient_checks},
      {"3 closed-form spot values", spot_values},
      {"4 structural laws", structural_laws},
      {"5 end-to-end desk experiment", end_to_end},
      {"6 byte-identical metrics on rerun", determinism},
  };
  std::set<int> only;
  for (int a = 1; a < argc; ++a) only.insert(std::atoi(argv[a]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!only.empty() && !only.count(int(k) + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s  %s [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", criteria[k].first, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}

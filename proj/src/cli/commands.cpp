#include "souf/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <boost/algorithm/string.hpp>

#include "souf/backbone/checkpoint.hpp"
#include "souf/cli/plot.hpp"
#include "souf/data/export.hpp"

namespace souf::cli {

int exit_code_for(const std::exception& e) {
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    std::cerr << "config error";
    if (!c->key().empty()) std::cerr << " [" << c->key() << "]";
    std::cerr << ": " << c->what() << '\n';
    return kExitConfig;
  }
  if (const auto* t = dynamic_cast<const TrainingAbort*>(&e)) {
    std::cerr << "training aborted (" << t->part() << "): " << t->what() << '\n';
    return kExitTraining;
  }
  if (dynamic_cast<const LoadError*>(&e)) {
    std::cerr << "load error: " << e.what() << '\n';
    return kExitLoad;
  }
  std::cerr << "error: " << e.what() << '\n';
  return kExitFailure;
}

std::string Toggles::label() const {
  std::string s;
  for (auto [on, name] : {std::pair{pwc, "pwc"}, {rmc, "rmc"}, {pr, "pr"}})
    if (on) s += (s.empty() ? "" : "+") + std::string(name);
  return s.empty() ? "none" : s;
}

Toggles Toggles::parse(const std::string& text) {
  const std::string t = boost::algorithm::trim_copy(text);
  if (t == "all") return {};
  Toggles out{false, false, false};
  if (t.empty() || t == "none") return out;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, t, boost::is_any_of(",+"));
  for (auto p : parts) {
    boost::algorithm::trim(p);
    if (p == "pwc") out.pwc = true;
    else if (p == "rmc") out.rmc = true;
    else if (p == "pr") out.pr = true;
    else throw ConfigError("unknown toggle '" + p + "' (expected pwc, rmc, pr)", "toggles");
  }
  return out;
}

losses::LossWeights apply_toggles(losses::LossWeights w, const Toggles& t) {
  if (!t.pwc) w.lambda_pwc = 0.0;
  if (!t.rmc) w.lambda_rmc = 0.0;
  if (!t.pr) w.lambda_pr = 0.0;
  return w;
}

std::vector<Toggles> ablation_rows() {
  return {
      {false, false, false}, {true, false, false}, {false, true, false}, {false, false, true},
      {true, true, false},   {true, false, true},  {false, true, true},  {true, true, true},
  };
}

engine::RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string(), "config");
  auto rc = engine::RunConfig::from_config(ConfigFile::load(path));
  if (seed) rc.set_seed(*seed);
  return rc;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& r : epochs)
    epochs_json.push_back({{"epoch", r.epoch},
                           {"loss_base", r.loss_base},
                           {"loss_pwc", r.loss_pwc},
                           {"loss_rmc", r.loss_rmc},
                           {"loss_pr", r.loss_pr},
                           {"loss_all", r.loss_all},
                           {"target_acc", r.target_acc}});
  return {{"config_hash", hex64(config_hash)},
          {"seed", seed},
          {"toggles", toggles},
          {"source_val_acc", source_val_acc},
          {"source_only_acc", source_only_acc},
          {"final_acc", final_acc},
          {"epochs", epochs_json},
          {"wall_seconds", wall_seconds},
          {"classifier_frozen", classifier_frozen_ok}};
}

SourceModel pretrain_to(const engine::RunConfig& config, const data::DatasetSplit& split,
                        const fs::path& dir, kernels::Exec exec) {
  fs::create_directories(dir);
  auto r = engine::pretrain_source(split, config, exec);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.log)
    log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
  const nlohmann::json meta{{"config_hash", hex64(config.config_hash)}, {"seed", config.train.seed}};
  backbone::save_checkpoint(dir / "source.ckpt", r.model, r.val_acc, meta);
  write_json(dir / "pretrain.json", {{"val_acc", r.val_acc}, {"log", log}, {"meta", meta}});
  return {std::move(r.model), r.val_acc};
}

RunRecord adapt_to(const engine::RunConfig& config, const data::DatasetSplit& split,
                   const SourceModel& source, const Toggles& toggles, const fs::path& dir,
                   bool save_model) {
  fs::create_directories(dir);
  engine::RunConfig rc = config;
  rc.loss = apply_toggles(rc.loss, toggles);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = engine::adapt_target(split, source.model, rc);
  RunRecord rec;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.config_hash = config.config_hash;
  rec.seed = config.train.seed;
  rec.toggles = toggles.label();
  rec.source_val_acc = source.val_acc;
  rec.source_only_acc = res.source_only_acc;
  rec.final_acc = res.final_acc;
  rec.epochs = res.records;
  rec.classifier_frozen_ok = res.classifier_hash_before == res.classifier_hash_after;
  engine::write_metrics(dir / "metrics.ndjson", res.records);
  write_json(dir / "summary.json", rec.to_json());
  if (save_model) {
    const nlohmann::json meta{{"config_hash", hex64(config.config_hash)},
                              {"seed", config.train.seed},
                              {"toggles", rec.toggles}};
    backbone::save_checkpoint(dir / "adapted.ckpt", res.model, source.val_acc, meta);
  }
  return rec;
}

std::pair<double, double> mean_std(const std::vector<std::optional<double>>& values) {
  double sum = 0;
  int n = 0;
  for (const auto& v : values)
    if (v) sum += *v, ++n;
  if (n == 0) return {std::nan(""), std::nan("")};
  const double mean = sum / n;
  double ss = 0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  return {mean, n > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
}

int AblationRow::ok() const {
  int n = 0;
  for (const auto& a : acc) n += a.has_value();
  return n;
}

namespace {

fs::path seed_dir(const fs::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

std::string fmt(double v, int digits = 4) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

AblationTable run_ablation(const engine::RunConfig& base, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Toggles>& rows, const fs::path& out,
                           kernels::Exec exec) {
  if (seeds.empty()) throw ConfigError("at least one seed is required", "seeds");
  AblationTable table;
  table.seeds = seeds;
  for (const auto& t : rows) {
    AblationRow row;
    row.toggles = t;
    row.acc.resize(seeds.size());
    row.errors.resize(seeds.size());
    table.rows.push_back(std::move(row));
  }
  table.source_only.assign(seeds.size(), std::nan(""));

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    engine::RunConfig rc = base;
    rc.set_seed(seeds[s]);
    const auto split = data::generate_synthetic_shift(rc.data);
    const auto dir = seed_dir(out, seeds[s]);
    std::optional<SourceModel> source;
    std::string source_error;
    try {
      source = pretrain_to(rc, split, dir, exec);
      std::cerr << "seed " << seeds[s] << ": source val acc " << fmt(source->val_acc) << '\n';
    } catch (const Error& e) {
      source_error = e.what();
      std::cerr << "seed " << seeds[s] << ": pretraining failed: " << e.what() << '\n';
    }
    for (auto& row : table.rows) {
      if (!source) {
        row.errors[s] = "pretraining failed: " + source_error;
        continue;
      }
      try {
        const auto rec = adapt_to(rc, split, *source, row.toggles, dir / row.toggles.label(), false);
        row.acc[s] = rec.final_acc;
        table.source_only[s] = rec.source_only_acc;
        std::cerr << "seed " << seeds[s] << " " << row.toggles.label() << ": "
                  << fmt(rec.source_only_acc) << " -> " << fmt(rec.final_acc) << '\n';
      } catch (const Error& e) {
        row.errors[s] = e.what();
        std::cerr << "seed " << seeds[s] << " " << row.toggles.label() << ": failed: " << e.what()
                  << '\n';
      }
    }
  }
  for (auto& row : table.rows) std::tie(row.mean, row.stddev) = mean_std(row.acc);
  return table;
}

void write_ablation_csv(const AblationTable& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "row,toggles,pwc,rmc,pr,mean_acc,std_acc,mean_pm_std,runs_ok,status";
  for (auto s : t.seeds) out << ",acc_seed_" << s;
  out << '\n';
  std::vector<std::optional<double>> so;
  for (double v : t.source_only)
    so.push_back(std::isfinite(v) ? std::optional<double>(v) : std::nullopt);
  const auto [so_mean, so_std] = mean_std(so);
  out << "0,source-only,,,," << fmt(so_mean) << ',' << fmt(so_std) << ',' << fmt(so_mean)
      << "+-" << fmt(so_std) << ',' << std::count_if(so.begin(), so.end(), [](auto& v) { return v.has_value(); })
      << ",ok";
  for (const auto& v : so) out << ',' << (v ? fmt(*v) : "");
  out << '\n';
  int k = 1;
  for (const auto& r : t.rows) {
    out << k++ << ',' << r.toggles.label() << ',' << r.toggles.pwc << ',' << r.toggles.rmc << ','
        << r.toggles.pr << ',' << fmt(r.mean) << ',' << fmt(r.stddev) << ',' << fmt(r.mean) << "+-"
        << fmt(r.stddev) << ',' << r.ok() << ',' << (r.failed() ? "failed" : "ok");
    for (const auto& a : r.acc) out << ',' << (a ? fmt(*a) : "");
    out << '\n';
  }
}

SweepTable run_sweep(const engine::RunConfig& base, const std::string& param,
                     const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
                     const fs::path& out, kernels::Exec exec) {
  if (param != "lambda_pwc" && param != "lambda_rmc" && param != "lambda_pr")
    throw ConfigError("sweep parameter must be lambda_pwc, lambda_rmc or lambda_pr", "param");
  if (grid.empty()) throw ConfigError("sweep grid is empty", "grid");
  if (grid.size() < 3) throw ConfigError("sweep grid needs at least 3 values", "grid");
  for (double v : grid)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("sweep values must be >= 0", "grid");
  if (seeds.empty()) throw ConfigError("at least one seed is required", "seeds");

  SweepTable table;
  table.param = param;
  table.seeds = seeds;
  for (double v : grid) table.points.push_back({v, std::vector<std::optional<double>>(seeds.size())});

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    engine::RunConfig rc = base;
    rc.set_seed(seeds[s]);
    const auto split = data::generate_synthetic_shift(rc.data);
    const auto dir = seed_dir(out, seeds[s]);
    std::optional<SourceModel> source;
    try {
      source = pretrain_to(rc, split, dir, exec);
    } catch (const Error& e) {
      std::cerr << "seed " << seeds[s] << ": pretraining failed: " << e.what() << '\n';
      continue;
    }
    for (auto& p : table.points) {
      engine::RunConfig pc = rc;
      (param == "lambda_pwc" ? pc.loss.lambda_pwc
       : param == "lambda_rmc" ? pc.loss.lambda_rmc
                               : pc.loss.lambda_pr) = p.value;
      try {
        const auto rec = adapt_to(pc, split, *source, Toggles{}, dir / (param + "_" + fmt(p.value, 6)), false);
        p.acc[s] = rec.final_acc;
        std::cerr << "seed " << seeds[s] << " " << param << "=" << p.value << ": " << fmt(rec.final_acc) << '\n';
      } catch (const Error& e) {
        std::cerr << "seed " << seeds[s] << " " << param << "=" << p.value << ": failed: " << e.what() << '\n';
      }
    }
  }
  for (auto& p : table.points) std::tie(p.mean, p.stddev) = mean_std(p.acc);
  return table;
}

void write_sweep_csv(const SweepTable& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "param,value,mean_acc,std_acc,runs_ok";
  for (auto s : t.seeds) out << ",acc_seed_" << s;
  out << '\n';
  for (const auto& p : t.points) {
    const int ok = int(std::count_if(p.acc.begin(), p.acc.end(), [](auto& v) { return v.has_value(); }));
    out << t.param << ',' << fmt(p.value, 6) << ',' << fmt(p.mean) << ',' << fmt(p.stddev) << ',' << ok;
    for (const auto& a : p.acc) out << ',' << (a ? fmt(*a) : "");
    out << '\n';
  }
}

void write_sweep_plot(const SweepTable& t, const fs::path& path) {
  Series s;
  for (const auto& p : t.points) {
    if (!std::isfinite(p.mean)) continue;
    s.x.push_back(p.value);
    s.y.push_back(p.mean);
    s.err.push_back(p.stddev);
  }
  if (s.x.empty()) throw Error("sweep produced no successful runs to plot");
  write_line_plot(path, s);
}

engine::EvalReport evaluate_split(const backbone::VisionTransformer& model,
                                  const data::DatasetSplit& split, const std::string& which) {
  const std::vector<data::Sample>* pool = nullptr;
  if (which == "unlabeled") pool = &split.target_unlabeled;
  else if (which == "holdout") pool = &split.target_holdout;
  else if (which == "labeled") pool = &split.target_labeled;
  else if (which == "source") pool = &split.source;
  else throw ConfigError("unknown split '" + which + "'", "split");
  if (pool->empty())
    throw ConfigError("split '" + which + "' is empty" +
                          (which == "holdout" ? std::string(" (set [data].n_holdout)") : ""),
                      which == "holdout" ? "n_holdout" : "split");
  return engine::evaluate(model, *pool);
}

nlohmann::json eval_json(const engine::EvalReport& r, const std::string& which) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& p : r.per_class) per_class.push_back(p ? nlohmann::json(*p) : nlohmann::json("n/a"));
  return {{"split", which},         {"total", r.total},        {"correct", r.correct},
          {"accuracy", r.accuracy}, {"per_class", per_class},  {"confusion", r.confusion}};
}

std::vector<double> parse_grid(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::vector<std::string> parts;
  const std::string t = boost::algorithm::trim_copy(text);
  if (t.empty()) return out;
  boost::algorithm::split(parts, t, boost::is_any_of(","));
  for (auto p : parts) {
    boost::algorithm::trim(p);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(p, &used));
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + p + "' in --" + key, key);
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_grid(text, "seeds")) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("seeds must be non-negative integers", "seeds");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

}  // namespace souf::cli

#pragma once

// Workflow commands behind the `souf` tool. Each command writes its artifacts
// below an output directory and throws on failure; `exit_code_for` maps the
// error taxonomy onto process exit codes.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "souf/engine/run_config.hpp"
#include "souf/engine/trainer.hpp"

namespace souf::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitTraining = 3,
  kExitLoad = 4,
};

/// Prints a diagnostic for `e` to stderr and returns its exit code.
int exit_code_for(const std::exception& e);

/// Which optional objectives are active; inactive ones get weight zero.
struct Toggles {
  bool pwc = true;
  bool rmc = true;
  bool pr = true;

  /// "none", or the active parts joined with '+' in pwc, rmc, pr order.
  std::string label() const;
  /// Comma- or plus-separated subset of {pwc, rmc, pr}; "none" and "" are empty, "all" is full.
  static Toggles parse(const std::string& text);
  bool operator==(const Toggles&) const = default;
};

losses::LossWeights apply_toggles(losses::LossWeights w, const Toggles& t);

/// All eight subsets: none, singles, pairs, all.
std::vector<Toggles> ablation_rows();

/// Loads and validates a run config, optionally overriding its seed.
engine::RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed);

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string toggles;
  double source_val_acc = 0.0;
  double source_only_acc = 0.0;
  double final_acc = 0.0;
  std::vector<engine::EpochRecord> epochs;
  double wall_seconds = 0.0;
  bool classifier_frozen_ok = true;

  nlohmann::json to_json() const;
};

struct SourceModel {
  backbone::VisionTransformer model;
  double val_acc = 0.0;
};

/// Pretrains on the source split and saves `dir/source.ckpt`.
SourceModel pretrain_to(const engine::RunConfig& config, const data::DatasetSplit& split,
                        const fs::path& dir, kernels::Exec exec);

/// One adaptation run from `source` writing `metrics.ndjson` and
/// `summary.json` (and `adapted.ckpt` when `save_model`) into `dir`.
RunRecord adapt_to(const engine::RunConfig& config, const data::DatasetSplit& split,
                   const SourceModel& source, const Toggles& toggles, const fs::path& dir,
                   bool save_model = true);

struct AblationRow {
  Toggles toggles;
  std::vector<std::optional<double>> acc;  // per seed; empty on failure
  std::vector<std::string> errors;
  double mean = 0.0;
  double stddev = 0.0;
  int ok() const;
  bool failed() const { return ok() < static_cast<int>(acc.size()); }
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<double> source_only;  // per seed
  std::vector<AblationRow> rows;
};

/// Runs every requested toggle row for every seed from one pretrained model
/// per seed. Failed runs are recorded in their row; the grid continues.
AblationTable run_ablation(const engine::RunConfig& base, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Toggles>& rows, const fs::path& out,
                           kernels::Exec exec);
void write_ablation_csv(const AblationTable& table, const fs::path& path);

struct SweepPoint {
  double value = 0.0;
  std::vector<std::optional<double>> acc;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepTable {
  std::string param;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepPoint> points;
};

/// Varies one of lambda_pwc, lambda_rmc, lambda_pr over `grid` (at least 3 values).
SweepTable run_sweep(const engine::RunConfig& base, const std::string& param,
                     const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
                     const fs::path& out, kernels::Exec exec);
void write_sweep_csv(const SweepTable& table, const fs::path& path);
void write_sweep_plot(const SweepTable& table, const fs::path& path);

/// Evaluation on one split of the generated data: "unlabeled" (default,
/// transductive), "holdout", "labeled" or "source".
engine::EvalReport evaluate_split(const backbone::VisionTransformer& model,
                                  const data::DatasetSplit& split, const std::string& which);
nlohmann::json eval_json(const engine::EvalReport& report, const std::string& which);

/// Mean and sample standard deviation of the present values.
std::pair<double, double> mean_std(const std::vector<std::optional<double>>& values);

/// "0.1,0.2" -> {0.1, 0.2}; throws ConfigError naming `key` on a bad entry.
std::vector<double> parse_grid(const std::string& text, const std::string& key);
std::vector<std::uint64_t> parse_seeds(const std::string& text);

std::string hex64(std::uint64_t v);
void write_json(const fs::path& path, const nlohmann::json& j);

}  // namespace souf::cli

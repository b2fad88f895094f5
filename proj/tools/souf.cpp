// souf: generate | pretrain | adapt | ablate | sweep | eval

#include <malloc.h>

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <boost/algorithm/string.hpp>

#include "souf/backbone/checkpoint.hpp"
#include "souf/cli/commands.hpp"
#include "souf/data/export.hpp"

using namespace souf;
using namespace souf::cli;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool serial = false;

  kernels::Exec exec() const { return serial ? kernels::Exec::serial : kernels::Exec::parallel; }
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "run config file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_flag("--serial", c.serial, "use the serial reference kernels");
}

void write_dataset_manifest(const data::DatasetSplit& split, const engine::RunConfig& rc,
                            const fs::path& out) {
  write_json(out / "manifest.json", data::make_manifest(split, rc.data));
}

void print_eval(const engine::EvalReport& r) {
  std::printf("accuracy %.4f (%d/%d)\n", r.accuracy, r.correct, r.total);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    if (r.per_class[c]) std::printf("  class %zu  %.4f\n", c, *r.per_class[c]);
    else std::printf("  class %zu  n/a\n", c);
  }
}

}  // namespace

int main(int argc, char** argv) {
  // Large activation buffers are reallocated every step; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Source-free semi-supervised domain adaptation experiments"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset and manifest");
  add_common(gen, common);

  auto* pre = app.add_subcommand("pretrain", "train encoder and classifier on the source split");
  add_common(pre, common);

  auto* adapt = app.add_subcommand("adapt", "adapt a source model to the target split");
  add_common(adapt, common);
  std::string checkpoint, toggles = "all";
  adapt->add_option("--checkpoint", checkpoint, "source checkpoint (pretrains when omitted)");
  adapt->add_option("--toggles", toggles, "active parts: pwc,rmc,pr | all | none")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "8-row toggle grid over seeds");
  add_common(ablate, common);
  std::string seeds = "0,1,2", rows;
  ablate->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--rows", rows, "subset of rows, e.g. none;all (default: all 8)");

  auto* sweep = app.add_subcommand("sweep", "accuracy against one loss weight");
  add_common(sweep, common);
  std::string param, grid;
  sweep->add_option("--param", param, "lambda_pwc | lambda_rmc | lambda_pr")->required();
  sweep->add_option("--grid", grid, "comma-separated values (at least 3)")->required();
  sweep->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "accuracy report for a checkpoint");
  add_common(eval, common);
  std::string split_name = "unlabeled";
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--split", split_name, "unlabeled | holdout | labeled | source")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto rc = load_run_config(common.config, common.seed);
    const fs::path out = common.out;
    fs::create_directories(out);

    if (*gen) {
      const auto split = data::generate_synthetic_shift(rc.data);
      data::export_split(split, rc.data, out);
      std::printf("source %zu  target labeled %zu  unlabeled %zu  holdout %zu -> %s\n",
                  split.source.size(), split.target_labeled.size(), split.target_unlabeled.size(),
                  split.target_holdout.size(), out.c_str());
    } else if (*pre) {
      const auto split = data::generate_synthetic_shift(rc.data);
      write_dataset_manifest(split, rc, out);
      const auto src = pretrain_to(rc, split, out, common.exec());
      std::printf("source val acc %.4f -> %s\n", src.val_acc, (out / "source.ckpt").c_str());
    } else if (*adapt) {
      const auto t = Toggles::parse(toggles);
      const auto split = data::generate_synthetic_shift(rc.data);
      write_dataset_manifest(split, rc, out);
      SourceModel src;
      if (checkpoint.empty()) {
        src = pretrain_to(rc, split, out, common.exec());
      } else {
        auto ck = backbone::load_checkpoint(checkpoint, common.exec());
        src = {std::move(ck.model), ck.source_val_acc};
      }
      const auto rec = adapt_to(rc, split, src, t, out);
      std::printf("%s: source-only %.4f -> adapted %.4f (%d epochs, %.1fs)\n", rec.toggles.c_str(),
                  rec.source_only_acc, rec.final_acc, int(rec.epochs.size()), rec.wall_seconds);
    } else if (*ablate) {
      std::vector<Toggles> selected;
      if (rows.empty()) {
        selected = ablation_rows();
      } else {
        std::vector<std::string> names;
        boost::algorithm::split(names, rows, boost::is_any_of(";"));
        for (const auto& n : names) selected.push_back(Toggles::parse(n));
      }
      const auto table = run_ablation(rc, parse_seeds(seeds), selected, out, common.exec());
      write_ablation_csv(table, out / "ablation.csv");
      for (const auto& r : table.rows)
        std::printf("%-12s %.4f +- %.4f%s\n", r.toggles.label().c_str(), r.mean, r.stddev,
                    r.failed() ? "  (failed runs)" : "");
    } else if (*sweep) {
      const auto values = parse_grid(grid, "grid");
      const auto table = run_sweep(rc, param, values, parse_seeds(seeds), out, common.exec());
      write_sweep_csv(table, out / "sweep.csv");
      write_sweep_plot(table, out / "sweep.png");
      for (const auto& p : table.points) std::printf("%s=%g  %.4f +- %.4f\n", param.c_str(), p.value, p.mean, p.stddev);
    } else if (*eval) {
      const auto ck = backbone::load_checkpoint(checkpoint, common.exec());
      if (ck.model.config() != rc.encoder)
        throw LoadError("checkpoint encoder does not match the config's [model]");
      const auto split = data::generate_synthetic_shift(rc.data);
      const auto report = evaluate_split(ck.model, split, split_name);
      write_json(out / "eval.json", eval_json(report, split_name));
      print_eval(report);
    }
  } catch (const std::exception& e) {
    return exit_code_for(e);
  }
  return kExitOk;
}

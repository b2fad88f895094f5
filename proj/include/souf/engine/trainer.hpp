#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "souf/backbone/vit.hpp"
#include "souf/data/batching.hpp"
#include "souf/engine/prediction_store.hpp"
#include "souf/engine/reliable_set.hpp"
#include "souf/engine/run_config.hpp"

namespace souf::engine {

/// Seed streams derived from the run seed with mix_seed().
enum : std::uint64_t { kSplitStream = 1, kInitStream, kPretrainStream, kAdaptStream };

struct EvalReport {
  int total = 0;
  int correct = 0;
  double accuracy = 0.0;
  /// Empty for classes absent from the evaluated samples.
  std::vector<std::optional<double>> per_class;
  /// confusion[truth][predicted]
  std::vector<std::vector<int>> confusion;
  std::vector<int> predictions;
};

/// Top-1 accuracy against the generator ground truth.
EvalReport evaluate_probs(std::span<const data::Sample> samples, const MatD& probs,
                          int num_classes);
EvalReport evaluate(const backbone::VisionTransformer& model,
                    std::span<const data::Sample> samples);

struct PretrainEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct PretrainResult {
  backbone::VisionTransformer model;
  double val_acc = 0.0;
  std::vector<PretrainEpoch> log;
};

/// Cross-entropy training of g() and f() on a train part of the source split;
/// the remaining `val_fraction` is held out for the reported accuracy.
PretrainResult pretrain_source(const data::DatasetSplit& split, const RunConfig& config,
                               kernels::Exec exec = kernels::Exec::parallel);

/// Inputs of one adaptation step.
struct StepBatch {
  data::BatchPair batch;
  std::vector<int> pseudo;  // per unlabeled pair
  MatD ema;                 // store rows of the unlabeled pairs
  std::optional<MixedBatch> mixed;
  const ReliableSet* reliable = nullptr;
};

struct StepOptions {
  /// Evaluate every part even when its weight is zero.
  bool force_all = false;
  bool include_base = true;
};

struct StepResult {
  losses::LossParts parts;
  double total = 0.0;
  int rows = 0;
};

/// Forward, loss, and backward for one batch. Gradients are zeroed first and
/// left in the model; no parameter is updated.
StepResult adaptation_step(backbone::VisionTransformer& model, const StepBatch& step,
                           const losses::LossWeights& weights, const StepOptions& options = {});

struct EpochRecord {
  int epoch = 0;
  double loss_base = 0.0;
  double loss_pwc = 0.0;
  double loss_rmc = 0.0;
  double loss_pr = 0.0;
  double loss_all = 0.0;
  double target_acc = 0.0;
};

struct AdaptResult {
  backbone::VisionTransformer model;
  std::vector<EpochRecord> records;
  double source_only_acc = 0.0;
  double final_acc = 0.0;
  std::uint64_t classifier_hash_before = 0;
  std::uint64_t classifier_hash_after = 0;
};

/// Source-free adaptation from a source-trained model: the classifier is
/// frozen, the encoder is trained on the target with the weighted objective.
/// Pseudo-labels, the reliable set, and the prediction store are refreshed
/// once per epoch from weak-view predictions on the unlabeled pool.
/// `on_epoch`, when set, sees each record as it is produced.
AdaptResult adapt_target(const data::DatasetSplit& split, backbone::VisionTransformer model,
                         const RunConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

/// One record per line; fixed field order and number formatting.
std::string to_ndjson(const EpochRecord& record);
void write_metrics(const std::filesystem::path& path, std::span<const EpochRecord> records);

}  // namespace souf::engine

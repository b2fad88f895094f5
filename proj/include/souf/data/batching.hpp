#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "souf/data/augment.hpp"
#include "souf/data/dataset.hpp"

namespace souf::data {

/// Weak (original) and strong views of one unlabeled sample.
struct AugmentedPair {
  Image weak;
  Image strong;
  std::int64_t id = 0;
};

struct LabeledBatch {
  std::vector<std::int64_t> ids;
  std::vector<int> labels;
  std::vector<Image> images;
};

struct UnlabeledBatch {
  std::vector<AugmentedPair> pairs;
  std::vector<std::int64_t> ids() const;
};

struct BatchPair {
  LabeledBatch labeled;
  UnlabeledBatch unlabeled;
};

struct LoaderOptions {
  int batch_size = 32;
  int labeled_batch_size = 8;
  RandAugmentPolicy augment;
};

/// One epoch over the unlabeled target pool. Unlabeled samples are visited in a
/// shuffled order in full batches (the short remainder is dropped); each step
/// draws a labeled batch with replacement. Every batch is a pure function of
/// (epoch seed, batch index), so batches may be built in any order or thread.
class EpochLoader {
 public:
  EpochLoader(const DatasetSplit& split, const LoaderOptions& options, std::uint64_t epoch_seed);

  std::size_t size() const { return order_.size() / std::size_t(options_.batch_size); }
  BatchPair batch(std::size_t index) const;
  /// Unlabeled ids of batch `index`, without materializing images.
  std::vector<std::int64_t> unlabeled_ids(std::size_t index) const;

 private:
  const DatasetSplit* split_;
  LoaderOptions options_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
};

/// Starts an epoch, drawing its seed from `rng`.
EpochLoader make_batches(const DatasetSplit& split, const LoaderOptions& options,
                         std::mt19937_64& rng);

}  // namespace souf::data

#include "souf/data/batching.hpp"

#include <algorithm>
#include <numeric>

namespace souf::data {

std::vector<std::int64_t> UnlabeledBatch::ids() const {
  std::vector<std::int64_t> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.id);
  return out;
}

EpochLoader::EpochLoader(const DatasetSplit& split, const LoaderOptions& options,
                         std::uint64_t epoch_seed)
    : split_(&split), options_(options), seed_(epoch_seed) {
  if (options.batch_size < 2) throw ConfigError("batch_size must be >= 2", "batch_size");
  if (split.target_unlabeled.empty() || split.target_labeled.empty())
    throw ConfigError("split has no target samples to batch");
  if (options.labeled_batch_size < 1)
    throw ConfigError("labeled_batch_size must be >= 1", "labeled_batch_size");
  order_.resize(split.target_unlabeled.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed_, 0x0D3));
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::vector<std::int64_t> EpochLoader::unlabeled_ids(std::size_t index) const {
  if (index >= size()) throw InputError("batch index out of range");
  const auto bs = std::size_t(options_.batch_size);
  std::vector<std::int64_t> ids;
  for (std::size_t k = index * bs; k < (index + 1) * bs; ++k)
    ids.push_back(split_->target_unlabeled[order_[k]].id);
  return ids;
}

BatchPair EpochLoader::batch(std::size_t index) const {
  if (index >= size()) throw InputError("batch index out of range");
  const auto bs = std::size_t(options_.batch_size);
  BatchPair out;

  auto& pairs = out.unlabeled.pairs;
  pairs.resize(bs);
  const auto n = static_cast<std::int64_t>(bs);
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    const Sample& s = split_->target_unlabeled[order_[index * bs + std::size_t(k)]];
    auto& p = pairs[std::size_t(k)];
    p.id = s.id;
    p.weak = s.image;
    std::mt19937_64 aug_rng(mix_seed(seed_, 0xA06, static_cast<std::uint64_t>(s.id)));
    p.strong = strong_augment(s.image, aug_rng, options_.augment);
  }

  std::mt19937_64 rng(mix_seed(seed_, 0x1AB, index));
  std::uniform_int_distribution<std::size_t> pick(0, split_->target_labeled.size() - 1);
  for (int k = 0; k < options_.labeled_batch_size; ++k) {
    const Sample& s = split_->target_labeled[pick(rng)];
    out.labeled.ids.push_back(s.id);
    out.labeled.labels.push_back(*s.label);
    out.labeled.images.push_back(s.image);
  }
  return out;
}

EpochLoader make_batches(const DatasetSplit& split, const LoaderOptions& options,
                         std::mt19937_64& rng) {
  return EpochLoader(split, options, rng());
}

}  // namespace souf::data

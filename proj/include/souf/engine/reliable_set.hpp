#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "souf/backbone/mixing.hpp"
#include "souf/backbone/vit.hpp"
#include "souf/data/dataset.hpp"
#include "souf/losses/souf_losses.hpp"

namespace souf::engine {

struct PseudoLabel {
  int cls = 0;
  double entropy = 0.0;
};

using PseudoLabels = std::map<std::int64_t, PseudoLabel>;

/// Batched evaluation-mode forward pass over `samples`; returns probs [N, C].
MatD predict(const backbone::VisionTransformer& model, std::span<const data::Sample> samples,
             int batch_size = 128);

/// Argmax class (lowest index on ties) and entropy per row.
PseudoLabels pseudo_labels_from_probs(std::span<const data::Sample> samples, const MatD& probs);

/// Labels every unlabeled sample from its weak (unaugmented) view.
PseudoLabels pseudo_label(const backbone::VisionTransformer& model,
                          std::span<const data::Sample> unlabeled);

enum class Provenance { ground_truth, high_confidence };

struct ReliableEntry {
  const data::Sample* sample = nullptr;
  int label = 0;
  Provenance provenance = Provenance::ground_truth;
};

struct ReliableSet {
  std::vector<ReliableEntry> entries;
  int k = 0;
  std::size_t size() const { return entries.size(); }
};

/// Ground-truth labeled target samples plus, for each pseudo-class, the k
/// lowest-entropy unlabeled samples (all of them when fewer than k exist).
/// Entropy ties are broken by sample id.
ReliableSet build_reliable_set(const PseudoLabels& pseudo, const data::DatasetSplit& split,
                               int k);

struct MixOptions {
  int patch_size = 4;
  double beta = 1.0;
  double gamma = 1.0;
  /// When set, every patch uses this coefficient instead of a Beta draw.
  std::optional<double> fixed_lambda;
};

/// Mixed samples built from pairs of distinct reliable entries. Pairing
/// indices refer to `components`, the distinct reliable entries used.
struct MixedBatch {
  std::vector<data::Image> images;
  std::vector<backbone::MixSpec> specs;
  std::vector<int> components;  // indices into ReliableSet::entries
  std::vector<losses::MixPairing> pairing;
  std::vector<int> component_labels;
};

MixedBatch assemble_mixed_batch(const ReliableSet& reliable, int batch_size, std::mt19937_64& rng,
                                const MixOptions& options);

}  // namespace souf::engine

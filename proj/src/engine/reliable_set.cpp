#include "souf/engine/reliable_set.hpp"

#include <algorithm>
#include <unordered_map>

namespace souf::engine {

MatD predict(const backbone::VisionTransformer& model, std::span<const data::Sample> samples,
             int batch_size) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  MatD out(n, model.config().num_classes);
  std::vector<data::Image> images;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
    images.clear();
    for (Eigen::Index k = 0; k < len; ++k) images.push_back(samples[std::size_t(start + k)].image);
    out.middleRows(start, len) = model.forward(images).probs;
  }
  return out;
}

PseudoLabels pseudo_labels_from_probs(std::span<const data::Sample> samples, const MatD& probs) {
  if (Eigen::Index(samples.size()) != probs.rows())
    throw InputError("pseudo_labels_from_probs: row count mismatch");
  const auto cls = backbone::argmax_rows(probs);
  PseudoLabels out;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto r = Eigen::Index(k);
    out[samples[k].id] =
        PseudoLabel{cls[k], losses::entropy({probs.data() + r * probs.cols(), std::size_t(probs.cols())})};
  }
  return out;
}

PseudoLabels pseudo_label(const backbone::VisionTransformer& model,
                          std::span<const data::Sample> unlabeled) {
  return pseudo_labels_from_probs(unlabeled, predict(model, unlabeled));
}

ReliableSet build_reliable_set(const PseudoLabels& pseudo, const data::DatasetSplit& split, int k) {
  if (k < 0) throw ConfigError("reliable_k must be >= 0", "reliable_k");
  ReliableSet out;
  out.k = k;
  for (const auto& s : split.target_labeled) {
    if (!s.label) throw InputError("labeled target sample without a label");
    out.entries.push_back({&s, *s.label, Provenance::ground_truth});
  }
  if (k == 0) return out;

  std::vector<std::vector<std::pair<double, const data::Sample*>>> pools(
      std::size_t(split.num_classes));
  for (const auto& s : split.target_unlabeled) {
    auto it = pseudo.find(s.id);
    if (it == pseudo.end())
      throw InputError("pseudo-labels do not cover unlabeled sample " + std::to_string(s.id));
    const int c = it->second.cls;
    if (c < 0 || c >= split.num_classes) throw InputError("pseudo-label out of range");
    pools[std::size_t(c)].emplace_back(it->second.entropy, &s);
  }
  for (int c = 0; c < split.num_classes; ++c) {
    auto& pool = pools[std::size_t(c)];
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
    });
    const std::size_t take = std::min(pool.size(), std::size_t(k));
    for (std::size_t n = 0; n < take; ++n)
      out.entries.push_back({pool[n].second, c, Provenance::high_confidence});
  }
  return out;
}

MixedBatch assemble_mixed_batch(const ReliableSet& reliable, int batch_size, std::mt19937_64& rng,
                                const MixOptions& options) {
  const auto r = static_cast<int>(reliable.size());
  if (r < 2) throw ValidationError("mixing needs at least two reliable samples");
  if (batch_size < 1) throw ValidationError("mix batch size must be >= 1");
  const data::Image& probe = reliable.entries.front().sample->image;
  const int m = (probe.height / options.patch_size) * (probe.width / options.patch_size);

  MixedBatch out;
  std::unordered_map<int, int> component_row;
  auto row_of = [&](int entry) {
    auto [it, inserted] = component_row.emplace(entry, int(out.components.size()));
    if (inserted) {
      out.components.push_back(entry);
      out.component_labels.push_back(reliable.entries[std::size_t(entry)].label);
    }
    return it->second;
  };

  std::uniform_int_distribution<int> first(0, r - 1);
  std::uniform_int_distribution<int> second(0, r - 2);
  for (int b = 0; b < batch_size; ++b) {
    const int i = first(rng);
    int j = second(rng);
    if (j >= i) ++j;
    backbone::MixSpec spec;
    spec.i = i;
    spec.j = j;
    spec.beta = options.beta;
    spec.gamma = options.gamma;
    spec.lambdas = backbone::sample_patch_lambdas(m, options.beta, options.gamma, rng);
    if (options.fixed_lambda) std::fill(spec.lambdas.begin(), spec.lambdas.end(), *options.fixed_lambda);
    out.images.push_back(backbone::mix_patches(reliable.entries[std::size_t(i)].sample->image,
                                               reliable.entries[std::size_t(j)].sample->image, spec,
                                               options.patch_size));
    out.pairing.push_back({row_of(i), row_of(j)});
    out.specs.push_back(std::move(spec));
  }
  return out;
}

}  // namespace souf::engine

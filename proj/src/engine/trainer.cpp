#include "souf/engine/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "souf/engine/optimizer.hpp"

namespace souf::engine {

namespace {

void require_finite(double value, const char* part) {
  if (!std::isfinite(value))
    throw TrainingAbort(std::string("non-finite ") + part, part);
}

}  // namespace

EvalReport evaluate_probs(std::span<const data::Sample> samples, const MatD& probs,
                          int num_classes) {
  if (Eigen::Index(samples.size()) != probs.rows())
    throw InputError("evaluate: row count mismatch");
  EvalReport r;
  r.total = static_cast<int>(samples.size());
  r.predictions = backbone::argmax_rows(probs);
  r.confusion.assign(std::size_t(num_classes), std::vector<int>(std::size_t(num_classes), 0));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const int t = samples[k].truth;
    if (t < 0 || t >= num_classes) throw InputError("evaluate: truth out of range");
    ++r.confusion[std::size_t(t)][std::size_t(r.predictions[k])];
    if (t == r.predictions[k]) ++r.correct;
  }
  r.accuracy = r.total ? double(r.correct) / r.total : 0.0;
  r.per_class.resize(std::size_t(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const auto& row = r.confusion[std::size_t(c)];
    const int n = std::accumulate(row.begin(), row.end(), 0);
    if (n > 0) r.per_class[std::size_t(c)] = double(row[std::size_t(c)]) / n;
  }
  return r;
}

EvalReport evaluate(const backbone::VisionTransformer& model,
                    std::span<const data::Sample> samples) {
  return evaluate_probs(samples, predict(model, samples), model.config().num_classes);
}

PretrainResult pretrain_source(const data::DatasetSplit& split, const RunConfig& config,
                               kernels::Exec exec) {
  if (split.source.empty()) throw ConfigError("source split is empty", "n_source");
  const TrainConfig& t = config.train;

  std::vector<std::size_t> order(split.source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(mix_seed(t.seed, kSplitStream));
  std::shuffle(order.begin(), order.end(), split_rng);
  auto n_val = static_cast<std::size_t>(std::floor(t.val_fraction * double(order.size())));
  if (n_val >= order.size()) n_val = order.size() - 1;
  std::vector<data::Sample> train, val;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_val ? val : train).push_back(split.source[order[k]]);

  PretrainResult out;
  out.model = backbone::VisionTransformer(config.encoder, mix_seed(t.seed, kInitStream), exec);
  Optimizer opt(t.pretrain_optimizer, t.pretrain_lr_encoder, t.pretrain_lr_classifier, t.momentum);
  std::mt19937_64 rng(mix_seed(t.seed, kPretrainStream));

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<data::Image> images;
  backbone::ForwardCache cache;
  for (int epoch = 1; epoch <= t.pretrain_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < idx.size(); start += std::size_t(t.batch_size)) {
      const std::size_t len = std::min(std::size_t(t.batch_size), idx.size() - start);
      images.clear();
      std::vector<int> labels;
      for (std::size_t k = 0; k < len; ++k) {
        const auto& s = train[idx[start + k]];
        if (t.pretrain_augment) {
          std::mt19937_64 aug(mix_seed(t.seed, kPretrainStream + std::uint64_t(epoch) * 0x10000,
                                       static_cast<std::uint64_t>(s.id)));
          images.push_back(data::strong_augment(s.image, aug, t.augment));
        } else {
          images.push_back(s.image);
        }
        labels.push_back(*s.label);
      }
      const auto fb = out.model.forward(images, &cache);
      Mat dlogits = fb.probs.cast<float>();
      double loss = 0.0;
      const auto pred = backbone::argmax_rows(fb.probs);
      for (std::size_t k = 0; k < len; ++k) {
        const auto r = Eigen::Index(k);
        loss -= std::log(std::max(fb.probs(r, labels[k]), losses::kLogClamp));
        dlogits(r, labels[k]) -= 1.0f;
        if (pred[k] == labels[k]) ++correct;
      }
      loss /= double(len);
      require_finite(loss, "loss_source");
      dlogits /= static_cast<float>(len);
      out.model.zero_grad();
      out.model.backward(cache, dlogits);
      if (t.grad_clip > 0.0) Optimizer::clip_grad_norm(out.model, t.grad_clip);
      opt.step(out.model);
      loss_sum += loss * double(len);
    }
    PretrainEpoch rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / double(train.size());
    rec.train_acc = double(correct) / double(train.size());
    rec.val_acc = val.empty() ? rec.train_acc : evaluate(out.model, val).accuracy;
    out.log.push_back(rec);
  }
  out.val_acc = val.empty() ? evaluate(out.model, train).accuracy : evaluate(out.model, val).accuracy;
  return out;
}

StepResult adaptation_step(backbone::VisionTransformer& model, const StepBatch& step,
                           const losses::LossWeights& w, const StepOptions& options) {
  const auto& pairs = step.batch.unlabeled.pairs;
  const auto& lab = step.batch.labeled;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const auto nl = static_cast<Eigen::Index>(lab.images.size());
  if (Eigen::Index(step.pseudo.size()) != n) throw InputError("pseudo-labels do not match batch");

  const bool do_pwc = options.force_all || w.lambda_pwc > 0.0;
  const bool do_pr = options.force_all || w.lambda_pr > 0.0;
  const bool do_rmc = (options.force_all || w.lambda_rmc > 0.0) && step.mixed.has_value();
  if (do_pr && step.ema.rows() != n) throw InputError("store rows do not match batch");

  // Row layout: weak | strong | labeled | mixed | components.
  std::vector<data::Image> images;
  for (const auto& p : pairs) images.push_back(p.weak);
  const Eigen::Index strong0 = Eigen::Index(images.size());
  if (do_pwc)
    for (const auto& p : pairs) images.push_back(p.strong);
  const Eigen::Index lab0 = Eigen::Index(images.size());
  for (const auto& im : lab.images) images.push_back(im);
  const Eigen::Index mix0 = Eigen::Index(images.size());
  Eigen::Index nm = 0, nc = 0;
  if (do_rmc) {
    const MixedBatch& mb = *step.mixed;
    for (const auto& im : mb.images) images.push_back(im);
    for (int e : mb.components) images.push_back(step.reliable->entries[std::size_t(e)].sample->image);
    nm = Eigen::Index(mb.images.size());
    nc = Eigen::Index(mb.components.size());
  }
  const Eigen::Index comp0 = mix0 + nm;

  backbone::ForwardCache cache;
  const auto fb = model.forward(images, &cache);
  const MatD& P = fb.probs;
  MatD dP = MatD::Zero(P.rows(), P.cols());
  StepResult out;
  out.rows = static_cast<int>(P.rows());

  {
    const auto base = losses::base_loss(P.middleRows(lab0, nl), lab.labels, P.topRows(n), step.pseudo);
    out.parts.base = base.value;
    // Diverged weights show up here first; later parts would reject the probabilities outright.
    require_finite(base.value, "loss_base");
    if (options.include_base) {
      if (nl) dP.middleRows(lab0, nl) += base.grad_labeled;
      dP.topRows(n) += base.grad_unlabeled;
    }
  }
  if (do_pwc) {
    MatD stacked(2 * n, P.cols());
    stacked << P.topRows(n), P.middleRows(strong0, n);
    losses::CategoryAssignment cats;
    cats.labels = step.pseudo;
    cats.labels.insert(cats.labels.end(), step.pseudo.begin(), step.pseudo.end());
    const auto r = losses::pwc_loss(stacked, cats, w.tau);
    out.parts.pwc = r.value;
    dP.topRows(n) += w.lambda_pwc * r.grad.topRows(n);
    dP.middleRows(strong0, n) += w.lambda_pwc * r.grad.bottomRows(n);
  }
  if (do_pr) {
    const auto r = losses::pr_loss(P.topRows(n), step.ema);
    out.parts.pr = r.value;
    dP.topRows(n) += w.lambda_pr * r.grad;
  }
  if (do_rmc) {
    const MixedBatch& mb = *step.mixed;
    std::vector<double> lam(static_cast<std::size_t>(nm));
    for (Eigen::Index k = 0; k < nm; ++k)
      lam[std::size_t(k)] = backbone::lambda_hat(mb.specs[std::size_t(k)],
                                                 fb.attention_of(static_cast<int>(mix0 + k)));
    const auto r = losses::rmc_loss(P.middleRows(mix0, nm), P.middleRows(comp0, nc), mb.pairing,
                                    lam, mb.component_labels, w.tau);
    out.parts.rmc = r.value;
    dP.middleRows(mix0, nm) += w.lambda_rmc * r.grad_mixed;
    dP.middleRows(comp0, nc) += w.lambda_rmc * r.grad_components;
  }
  out.total = losses::total_loss(out.parts, w);

  model.zero_grad();
  model.backward(cache, backbone::softmax_backward(P, dP));
  return out;
}

AdaptResult adapt_target(const data::DatasetSplit& split, backbone::VisionTransformer model,
                         const RunConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  const TrainConfig& t = config.train;
  const auto& pool = split.target_unlabeled;
  if (pool.empty()) throw ConfigError("unlabeled target split is empty", "n_unlabeled");
  if (model.config() != config.encoder) throw ConfigError("checkpoint encoder does not match [model]");

  AdaptResult out;
  model.freeze_classifier();
  out.classifier_hash_before = model.classifier_hash();

  std::vector<std::int64_t> ids;
  for (const auto& s : pool) ids.push_back(s.id);
  PredictionStore store(ids, config.encoder.num_classes, config.loss.alpha);
  Optimizer opt(OptimizerKind::sgd, t.lr_encoder, t.lr_classifier, t.momentum);
  std::mt19937_64 rng(mix_seed(t.seed, kAdaptStream));

  data::LoaderOptions lo;
  lo.batch_size = t.batch_size;
  lo.labeled_batch_size = t.labeled_batch_size;
  lo.augment = t.augment;
  MixOptions mo;
  mo.patch_size = config.encoder.patch_size;
  mo.beta = t.beta;
  mo.gamma = t.gamma;

  MatD probs = predict(model, pool);
  out.source_only_acc = evaluate_probs(pool, probs, config.encoder.num_classes).accuracy;
  out.final_acc = out.source_only_acc;
  PseudoLabels pseudo = pseudo_labels_from_probs(pool, probs);

  for (int epoch = 1; epoch <= t.adapt_epochs; ++epoch) {
    const ReliableSet reliable = build_reliable_set(pseudo, split, t.reliable_k);
    const auto loader = data::make_batches(split, lo, rng);
    if (loader.size() == 0) throw ConfigError("batch_size exceeds the unlabeled pool", "batch_size");

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < loader.size(); ++b) {
      StepBatch sb;
      sb.batch = loader.batch(b);
      const auto batch_ids = sb.batch.unlabeled.ids();
      for (auto id : batch_ids) sb.pseudo.push_back(pseudo.at(id).cls);
      sb.ema = store.rows(batch_ids);
      sb.reliable = &reliable;
      // Drawn whether or not the part is active so toggles leave the stream intact.
      if (reliable.size() >= 2) sb.mixed = assemble_mixed_batch(reliable, t.mix_batch_size, rng, mo);

      const auto r = adaptation_step(model, sb, config.loss);
      if (t.grad_clip > 0.0) Optimizer::clip_grad_norm(model, t.grad_clip);
      opt.step(model);
      rec.loss_base += r.parts.base;
      rec.loss_pwc += r.parts.pwc;
      rec.loss_rmc += r.parts.rmc;
      rec.loss_pr += r.parts.pr;
      rec.loss_all += r.total;
    }
    const double nb = double(loader.size());
    rec.loss_base /= nb;
    rec.loss_pwc /= nb;
    rec.loss_rmc /= nb;
    rec.loss_pr /= nb;
    rec.loss_all /= nb;

    probs = predict(model, pool);
    rec.target_acc = evaluate_probs(pool, probs, config.encoder.num_classes).accuracy;
    store.update(ids, probs);
    store.advance_epoch();
    pseudo = pseudo_labels_from_probs(pool, probs);
    out.final_acc = rec.target_acc;
    out.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  out.classifier_hash_after = model.classifier_hash();
  out.model = std::move(model);
  return out;
}

std::string to_ndjson(const EpochRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"epoch\":%d,\"loss_base\":%.9f,\"loss_pwc\":%.9f,\"loss_rmc\":%.9f,"
                "\"loss_pr\":%.9f,\"loss_all\":%.9f,\"target_acc\":%.6f}",
                r.epoch, r.loss_base, r.loss_pwc, r.loss_rmc, r.loss_pr, r.loss_all, r.target_acc);
  return buf;
}

void write_metrics(const std::filesystem::path& path, std::span<const EpochRecord> records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  for (const auto& r : records) f << to_ndjson(r) << '\n';
}

}  // namespace souf::engine

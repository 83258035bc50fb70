#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/eval/span.hpp"
#include "srlprobe/model/ablation_mask.hpp"
#include "srlprobe/model/loss.hpp"
#include "srlprobe/train/adamw.hpp"
#include "srlprobe/train/pretrain.hpp"
#include "srlprobe/train/regime.hpp"

namespace srlprobe::train {

struct FinetuneHyper {
  double lr = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int max_answer_len = eval::kDefaultMaxAnswerLen;

  nlohmann::ordered_json to_json() const {
    return {{"lr", lr},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"weight_decay", weight_decay},
            {"clip_norm", clip_norm},
            {"max_answer_len", max_answer_len}};
  }

  void validate() const {
    if (lr <= 0.0 || batch_size < 1 || max_epochs < 1 || patience < 1 || max_answer_len < 1) {
      throw ValidationError("finetune: invalid hyperparameters");
    }
  }
};

inline model::QaTarget qa_target(const data::EncodedExample& ex) {
  auto [b, e] = ex.context_range();
  return {b, e, ex.answer_start, ex.answer_end};
}

inline std::span<const int> unpadded(const data::EncodedExample& ex) {
  return {ex.input_ids.data(), static_cast<std::size_t>(ex.length)};
}

/// Fine-tunes `backbone` on span extraction. The QA head is re-drawn from
/// `seed`, only the regime's trainable set moves, and a non-empty mask is
/// re-applied after every step. Returns the best-validation-F1 parameters.
inline TrainResult finetune(Params backbone, BackboneSource source, const RegimeSpec& regime,
                            const std::vector<data::EncodedExample>& train_set,
                            const std::vector<data::EncodedExample>& val_set, const FinetuneHyper& hyper,
                            std::uint64_t seed, const model::AblationMask* mask = nullptr,
                            const EpochCallback& on_epoch = {}) {
  hyper.validate();
  if (source != regime.backbone()) {
    throw ValidationError("finetune: regime '" + regime_name(regime.regime) + "' expects a " +
                          (regime.backbone() == BackboneSource::Pretrained ? "pre-trained" : "randomly initialised") +
                          " backbone");
  }
  if (train_set.empty() || val_set.empty()) throw ValidationError("finetune: empty train or validation set");
  Params p = std::move(backbone);
  const TrainableSet ts = regime.trainable();
  if (ts.tok_emb_row && *ts.tok_emb_row >= p.config.vocab) throw ValidationError("finetune: sep id outside vocabulary");
  model::reinit_qa_head(p, seed);
  const bool masked = mask && !mask->empty();
  if (masked) model::apply_ablation_inplace(p, *mask);

  auto state = AdamWState<float>::init(p.config);
  const model::GradGroups groups = regime.grad_groups();
  AdamWConfig cfg;
  cfg.lr = hyper.lr;
  cfg.weight_decay = hyper.weight_decay;
  cfg.clip_norm = hyper.clip_norm;

  std::mt19937_64 order_rng(mix_seed(seed, 0xF17E));
  std::vector<std::size_t> order(train_set.size());
  TrainResult r;
  double best_f1 = -1.0;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(hyper.batch_size));
      model::PackedBatch batch;
      model::LossSpec spec;
      spec.kind = model::LossKind::Qa;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& ex = train_set[order[k]];
        batch.add(unpadded(ex));
        spec.targets.push_back(qa_target(ex));
      }
      model::ForwardOptions opt;
      opt.train = true;
      opt.dropout_seed = mix_seed(seed, static_cast<std::uint64_t>(step) + 1);
      auto g = model::gradients(p, batch, spec, groups, opt);
      adamw_step(state, p, g.grads, ts, cfg);
      if (masked) model::apply_ablation_inplace(p, *mask);
      loss_sum += g.loss;
      ++batches;
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(1, batches));
    m.val_metric = eval::evaluate(p, val_set, false, hyper.max_answer_len).f1;
    m.steps = step;
    if (!std::isfinite(m.train_loss)) throw NumericalError("finetune: loss diverged at epoch " + std::to_string(epoch));
    const bool is_best = m.val_metric > best_f1;
    if (is_best) {
      best_f1 = m.val_metric;
      r.best_epoch = epoch;
      r.best = p;
    }
    r.epochs.push_back(m);
    r.stop_epoch = epoch;
    if (on_epoch) on_epoch(m, p, is_best);
    if (epoch - r.best_epoch >= hyper.patience) {
      r.early_stopped = true;
      break;
    }
  }
  r.last = p;
  return r;
}

}  // namespace srlprobe::train

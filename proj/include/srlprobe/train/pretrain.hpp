#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/tokenizer.hpp"
#include "srlprobe/model/loss.hpp"
#include "srlprobe/model/params.hpp"
#include "srlprobe/train/adamw.hpp"

namespace srlprobe::train {

using Params = model::TransformerParams<float>;

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  std::int64_t steps = 0;
};

struct TrainResult {
  Params best;
  Params last;
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  bool early_stopped = false;
};

/// Called after every epoch with the current parameters.
using EpochCallback = std::function<void(const EpochMetrics&, const Params&, bool is_best)>;

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Token stream cut into non-overlapping windows; the last `val_fraction`
/// of windows is held out.
struct LmCorpus {
  std::vector<std::vector<int>> train;
  std::vector<std::vector<int>> val;
};

inline std::vector<int> tokenize_documents(const data::TokenizerVocab& vocab, const std::vector<std::string>& docs) {
  std::vector<int> stream;
  for (const auto& d : docs) {
    auto ids = data::tokenize(vocab, d);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  return stream;
}

inline LmCorpus make_lm_corpus(const std::vector<int>& stream, int window, double val_fraction) {
  if (window < 2) throw ValidationError("pretrain: window must be >= 2");
  if (val_fraction <= 0.0 || val_fraction >= 1.0) throw ValidationError("pretrain: val_fraction must be in (0, 1)");
  std::vector<std::vector<int>> windows;
  for (std::size_t i = 0; i + static_cast<std::size_t>(window) <= stream.size(); i += static_cast<std::size_t>(window)) {
    windows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(i),
                         stream.begin() + static_cast<std::ptrdiff_t>(i) + window);
  }
  if (windows.size() < 2) throw ValidationError("pretrain: corpus shorter than two windows");
  auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(windows.size()))));
  n_val = std::min(n_val, windows.size() - 1);
  LmCorpus c;
  c.train.assign(windows.begin(), windows.end() - static_cast<std::ptrdiff_t>(n_val));
  c.val.assign(windows.end() - static_cast<std::ptrdiff_t>(n_val), windows.end());
  return c;
}

struct PretrainHyper {
  double lr = 5e-4;
  int batch_size = 64;
  int warmup_steps = 500;
  std::int64_t samples_per_epoch = 0;  // 0 = one pass over the training windows
  int max_epochs = 200;
  int patience = 20;
  double label_smoothing = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int window = 0;  // 0 = max_seq
  double val_fraction = 0.1;

  nlohmann::ordered_json to_json() const {
    return {{"lr", lr},
            {"batch_size", batch_size},
            {"warmup_steps", warmup_steps},
            {"samples_per_epoch", samples_per_epoch},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"label_smoothing", label_smoothing},
            {"weight_decay", weight_decay},
            {"clip_norm", clip_norm},
            {"window", window},
            {"val_fraction", val_fraction}};
  }

  void validate() const {
    if (lr <= 0.0 || batch_size < 1 || warmup_steps < 0 || max_epochs < 1 || patience < 1 || samples_per_epoch < 0) {
      throw ValidationError("pretrain: invalid hyperparameters");
    }
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ValidationError("pretrain: label_smoothing must be in [0, 1)");
  }
};

/// Mean plain cross entropy over held-out windows.
inline double lm_eval_loss(const Params& p, const std::vector<std::vector<int>>& windows, int batch_size) {
  double total = 0.0;
  std::size_t n = 0;
  model::ForwardOptions opt;
  opt.want_qa = false;
  for (std::size_t b0 = 0; b0 < windows.size(); b0 += static_cast<std::size_t>(batch_size)) {
    model::PackedBatch batch;
    const std::size_t b1 = std::min(windows.size(), b0 + static_cast<std::size_t>(batch_size));
    for (std::size_t i = b0; i < b1; ++i) batch.add(windows[i]);
    auto fwd = model::forward(p, batch, opt);
    const double loss = model::lm_loss<float>(fwd.lm_logits, batch, 0.0, nullptr);
    std::size_t preds = 0;
    for (int s = 0; s < batch.sequences(); ++s) preds += static_cast<std::size_t>(batch.length(s) - 1);
    total += loss * static_cast<double>(preds);
    n += preds;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

/// Causal-LM pre-training from `init_params(config, seed)`: linear warmup then
/// constant lr, label-smoothed loss, early stop on held-out plain CE.
inline TrainResult pretrain(const model::ModelConfig& config, const LmCorpus& corpus, const PretrainHyper& hyper,
                            std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  hyper.validate();
  if (corpus.train.empty() || corpus.val.empty()) throw ValidationError("pretrain: empty corpus split");
  Params p = model::init_params<float>(config, seed);
  auto state = AdamWState<float>::init(config);
  TrainableSet ts;
  ts.all = true;
  model::GradGroups groups;
  groups.qa_head = false;
  model::LossSpec spec;
  spec.kind = model::LossKind::Lm;
  spec.label_smoothing = hyper.label_smoothing;

  const std::size_t n_train = corpus.train.size();
  const std::size_t per_epoch = hyper.samples_per_epoch > 0 ? static_cast<std::size_t>(hyper.samples_per_epoch) : n_train;
  std::mt19937_64 order_rng(mix_seed(seed, 0x5A3D));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  auto next_index = [&] {
    if (cursor == order.size()) {
      order.resize(n_train);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  TrainResult r;
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    // Each epoch starts a fresh permutation so windows are drawn without
    // replacement within the epoch.
    cursor = order.size();
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t done = 0; done < per_epoch;) {
      model::PackedBatch batch;
      const std::size_t take = std::min(per_epoch - done, static_cast<std::size_t>(hyper.batch_size));
      for (std::size_t k = 0; k < take; ++k) batch.add(corpus.train[next_index()]);
      done += take;
      model::ForwardOptions opt;
      opt.train = true;
      opt.dropout_seed = mix_seed(seed, static_cast<std::uint64_t>(step) + 1);
      auto g = model::gradients(p, batch, spec, groups, opt);
      AdamWConfig cfg;
      cfg.lr = hyper.lr * (hyper.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / hyper.warmup_steps) : 1.0);
      cfg.weight_decay = hyper.weight_decay;
      cfg.clip_norm = hyper.clip_norm;
      adamw_step(state, p, g.grads, ts, cfg);
      loss_sum += g.loss;
      ++batches;
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(1, batches));
    m.val_metric = lm_eval_loss(p, corpus.val, hyper.batch_size);
    m.steps = step;
    if (!std::isfinite(m.val_metric) || !std::isfinite(m.train_loss)) {
      throw NumericalError("pretrain: loss diverged at epoch " + std::to_string(epoch));
    }
    const bool is_best = m.val_metric < best_val;
    if (is_best) {
      best_val = m.val_metric;
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

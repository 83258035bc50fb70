#pragma once

#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/transformer.hpp"

namespace srlprobe::model {

/// Gold span and admissible region for one packed sequence, in positions
/// relative to that sequence's start.
struct QaTarget {
  int context_begin = 0;  // first context position
  int context_end = 0;    // one past the last context position
  int start = 0;
  int end = 0;
};

/// Next-token cross entropy with label smoothing alpha, averaged over every
/// predicted position of every sequence. Gradient is w.r.t. the logits.
template <typename T>
double lm_loss(const Mat<T>& logits, const PackedBatch& batch, double alpha,
               std::type_identity_t<Mat<T>>* d_logits) {
  const Eigen::Index V = logits.cols();
  std::size_t count = 0;
  for (int b = 0; b < batch.sequences(); ++b) count += static_cast<std::size_t>(std::max(0, batch.length(b) - 1));
  if (d_logits) *d_logits = Mat<T>::Zero(logits.rows(), V);
  if (count == 0) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(count);
  double total = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(V));
  for (int b = 0; b < batch.sequences(); ++b) {
    for (int t = 0; t + 1 < batch.length(b); ++t) {
      const int i = batch.begin(b) + t;
      const int target = batch.ids[static_cast<std::size_t>(i + 1)];
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < V; ++k) mx = std::max(mx, static_cast<double>(logits(i, k)));
      double sum = 0.0;
      for (Eigen::Index k = 0; k < V; ++k) {
        prob[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(logits(i, k)) - mx);
        sum += prob[static_cast<std::size_t>(k)];
      }
      const double lse = mx + std::log(sum);
      double mean_nll = 0.0;
      for (Eigen::Index k = 0; k < V; ++k) mean_nll += lse - static_cast<double>(logits(i, k));
      mean_nll /= static_cast<double>(V);
      const double nll = lse - static_cast<double>(logits(i, target));
      total += (1.0 - alpha) * nll + alpha * mean_nll;
      if (d_logits) {
        for (Eigen::Index k = 0; k < V; ++k) {
          double q = alpha / static_cast<double>(V) + (k == target ? 1.0 - alpha : 0.0);
          (*d_logits)(i, k) = static_cast<T>((prob[static_cast<std::size_t>(k)] / sum - q) * inv_count);
        }
      }
    }
  }
  return total * inv_count;
}

/// Mean over sequences of ½(CE_start + CE_end), each softmax restricted to
/// the sequence's context positions.
template <typename T>
double qa_loss(const Vec<T>& s, const Vec<T>& e, const PackedBatch& batch,
               const std::vector<QaTarget>& targets, std::type_identity_t<Vec<T>>* d_s,
               std::type_identity_t<Vec<T>>* d_e) {
  if (static_cast<int>(targets.size()) != batch.sequences()) {
    throw ValidationError("qa_loss: one target per sequence required");
  }
  if (d_s) *d_s = Vec<T>::Zero(s.size());
  if (d_e) *d_e = Vec<T>::Zero(e.size());
  if (targets.empty()) return 0.0;
  const double w = 0.5 / static_cast<double>(targets.size());
  double total = 0.0;
  auto one_side = [&](const Vec<T>& logits, int off, const QaTarget& tg, int gold, Vec<T>* grad) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = tg.context_begin; i < tg.context_end; ++i) mx = std::max(mx, static_cast<double>(logits[off + i]));
    double sum = 0.0;
    for (int i = tg.context_begin; i < tg.context_end; ++i) sum += std::exp(static_cast<double>(logits[off + i]) - mx);
    const double lse = mx + std::log(sum);
    if (grad) {
      for (int i = tg.context_begin; i < tg.context_end; ++i) {
        double pr = std::exp(static_cast<double>(logits[off + i]) - lse);
        (*grad)[off + i] = static_cast<T>((pr - (i == gold ? 1.0 : 0.0)) * w);
      }
    }
    return lse - static_cast<double>(logits[off + gold]);
  };
  for (int b = 0; b < batch.sequences(); ++b) {
    const auto& tg = targets[static_cast<std::size_t>(b)];
    if (tg.context_begin < 0 || tg.context_end > batch.length(b) || tg.context_begin >= tg.context_end ||
        tg.start < tg.context_begin || tg.end >= tg.context_end) {
      throw ValidationError("qa_loss: target outside context");
    }
    const int off = batch.begin(b);
    total += one_side(s, off, tg, tg.start, d_s);
    total += one_side(e, off, tg, tg.end, d_e);
  }
  return total * w;
}

enum class LossKind { Lm, Qa };

struct LossSpec {
  LossKind kind = LossKind::Lm;
  double label_smoothing = 0.0;
  std::vector<QaTarget> targets;  // QA only
};

template <typename T>
struct GradientResult {
  double loss = 0.0;
  TransformerParams<T> grads;
};

template <typename T>
bool all_finite(const TransformerParams<T>& g) {
  bool ok = true;
  visit_tensors([&](const std::string&, TensorKind, const auto& t) {
    if (ok) ok = t.allFinite();
  }, g);
  return ok;
}

/// Loss and exact reverse-mode gradient for one packed batch. Dropout is
/// applied only when `opt.train` is set.
template <typename T>
GradientResult<T> gradients(const TransformerParams<T>& p, const PackedBatch& batch, const LossSpec& spec,
                            const GradGroups& groups = {}, ForwardOptions opt = {}) {
  if (batch.sequences() == 0) throw ValidationError("gradients: empty batch");
  opt.keep_cache = true;
  opt.want_lm = spec.kind == LossKind::Lm;
  opt.want_qa = spec.kind == LossKind::Qa;
  auto fwd = forward(p, batch, opt);
  GradientResult<T> r;
  if (spec.kind == LossKind::Lm) {
    Mat<T> d_lm;
    r.loss = lm_loss(fwd.lm_logits, batch, spec.label_smoothing, &d_lm);
    if (!std::isfinite(r.loss)) throw NumericalError("gradients: non-finite LM loss");
    r.grads = backward(p, batch, fwd, &d_lm, nullptr, nullptr, groups);
  } else {
    Vec<T> ds, de;
    r.loss = qa_loss(fwd.qa_start, fwd.qa_end, batch, spec.targets, &ds, &de);
    if (!std::isfinite(r.loss)) throw NumericalError("gradients: non-finite QA loss");
    r.grads = backward(p, batch, fwd, nullptr, &ds, &de, groups);
  }
  if (!all_finite(r.grads)) throw NumericalError("gradients: non-finite gradient");
  return r;
}

}  // namespace srlprobe::model

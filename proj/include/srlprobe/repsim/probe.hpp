#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/eval/span.hpp"
#include "srlprobe/model/loss.hpp"
#include "srlprobe/repsim/cka.hpp"
#include "srlprobe/train/pretrain.hpp"

namespace srlprobe::repsim {

struct ProbeHyper {
  std::size_t n_train = 500;  // probe set, split 80/20 into fit and early-stop parts
  double lr = 1e-3;
  int max_epochs = 100;
  int patience = 10;
  int batch_size = 32;
  double holdout_fraction = 0.2;
  int max_answer_len = eval::kDefaultMaxAnswerLen;

  nlohmann::ordered_json to_json() const {
    return {{"n_train", n_train}, {"lr", lr}, {"max_epochs", max_epochs}, {"patience", patience},
            {"batch_size", batch_size}, {"holdout_fraction", holdout_fraction}, {"max_answer_len", max_answer_len}};
  }
};

/// Per-token features of one example at one layer.
struct TokenFeatures {
  MatD x;  // length × d
  const data::EncodedExample* ex = nullptr;
};

template <typename T>
std::vector<TokenFeatures> layer_features(const model::TransformerParams<T>& p, int layer,
                                          const std::vector<data::EncodedExample>& xs, int batch_size = 64) {
  if (layer < 0 || layer > p.config.n_layers + 1) {
    throw ValidationError("layer_probe: layer " + std::to_string(layer) + " out of range [0, " +
                          std::to_string(p.config.n_layers + 1) + "]");
  }
  std::vector<TokenFeatures> out;
  out.reserve(xs.size());
  model::ForwardOptions opt;
  opt.want_lm = false;
  opt.want_qa = false;
  opt.capture.residual = true;
  for (std::size_t b0 = 0; b0 < xs.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(xs.size(), b0 + static_cast<std::size_t>(batch_size));
    model::PackedBatch batch;
    for (std::size_t i = b0; i < b1; ++i) batch.add({xs[i].input_ids.data(), static_cast<std::size_t>(xs[i].length)});
    auto fwd = model::forward(p, batch, opt);
    const auto& R = fwd.residual[static_cast<std::size_t>(layer)];
    for (std::size_t i = b0; i < b1; ++i) {
      const int s = static_cast<int>(i - b0);
      out.push_back({R.middleRows(batch.begin(s), batch.length(s)).template cast<double>(), &xs[i]});
    }
  }
  return out;
}

/// Linear start/end head over fixed features.
struct LinearSpanHead {
  Eigen::VectorXd w_start, w_end;

  double f1(const std::vector<TokenFeatures>& feats, int max_answer_len) const {
    if (feats.empty()) throw ValidationError("layer_probe: empty evaluation set");
    double total = 0.0;
    for (const auto& f : feats) {
      Eigen::VectorXd s = f.x * w_start, e = f.x * w_end;
      const auto len = static_cast<std::size_t>(f.ex->length);
      auto pred = eval::decode_span(std::span<const double>(s.data(), len), std::span<const double>(e.data(), len),
                                    std::span<const std::uint8_t>(f.ex->context_mask.data(), len), max_answer_len);
      total += eval::token_f1(pred, {f.ex->answer_start, f.ex->answer_end}).f1;
    }
    return total / static_cast<double>(feats.size());
  }
};

/// Adam on a fresh span head with the QA loss; early stop on the held-out
/// part of the probe set. The features are never changed.
inline LinearSpanHead train_span_head(const std::vector<TokenFeatures>& fit, const std::vector<TokenFeatures>& holdout,
                                      int d, const ProbeHyper& h, std::uint64_t seed) {
  std::mt19937_64 rng(train::mix_seed(seed, 0x9A0BE));
  std::normal_distribution<double> init(0.0, model::kInitStd);
  LinearSpanHead head{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (int i = 0; i < d; ++i) head.w_start[i] = init(rng);
  for (int i = 0; i < d; ++i) head.w_end[i] = init(rng);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2 * d), v = Eigen::VectorXd::Zero(2 * d);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  LinearSpanHead best = head;
  double best_f1 = -1.0;
  int best_epoch = 0;
  std::vector<std::size_t> order(fit.size());
  for (int epoch = 1; epoch <= h.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k0 = 0; k0 < order.size(); k0 += static_cast<std::size_t>(h.batch_size)) {
      const std::size_t k1 = std::min(order.size(), k0 + static_cast<std::size_t>(h.batch_size));
      Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * d);
      const double w = 0.5 / static_cast<double>(k1 - k0);
      for (std::size_t k = k0; k < k1; ++k) {
        const auto& f = fit[order[k]];
        auto [cb, ce] = f.ex->context_range();
        for (int side = 0; side < 2; ++side) {
          const Eigen::VectorXd logits = f.x.middleRows(cb, ce - cb) * (side == 0 ? head.w_start : head.w_end);
          const double mx = logits.maxCoeff();
          Eigen::VectorXd pr = (logits.array() - mx).exp();
          pr /= pr.sum();
          pr[(side == 0 ? f.ex->answer_start : f.ex->answer_end) - cb] -= 1.0;
          g.segment(side * d, d) += w * (f.x.middleRows(cb, ce - cb).transpose() * pr);
        }
      }
      ++t;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g.cwiseProduct(g);
      const double c1 = 1 - std::pow(b1, static_cast<double>(t)), c2 = 1 - std::pow(b2, static_cast<double>(t));
      Eigen::VectorXd step = h.lr * (m / c1).array() / ((v / c2).array().sqrt() + eps);
      head.w_start -= step.head(d);
      head.w_end -= step.tail(d);
    }
    const double f1 = head.f1(holdout, h.max_answer_len);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = head;
      best_epoch = epoch;
    }
    if (epoch - best_epoch >= h.patience) break;
  }
  return best;
}

struct LayerProbeResult {
  int layer = 0;
  std::string label;
  double f1 = 0.0;
  std::size_t n_train = 0;
};

/// Fresh span head on the layer's per-token activations; the first
/// `h.n_train` examples of `train_pool` form the probe set.
template <typename T>
LayerProbeResult layer_probe(const model::TransformerParams<T>& p, int layer,
                             const std::vector<data::EncodedExample>& train_pool,
                             const std::vector<data::EncodedExample>& val_set, const ProbeHyper& h, std::uint64_t seed) {
  const std::size_t n = std::min(h.n_train, train_pool.size());
  if (n < 5) throw ValidationError("layer_probe: need at least five probe examples");
  if (val_set.empty()) throw ValidationError("layer_probe: empty validation set");
  std::vector<data::EncodedExample> probe(train_pool.begin(), train_pool.begin() + static_cast<std::ptrdiff_t>(n));
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(h.holdout_fraction * static_cast<double>(n))));
  auto feats = layer_features(p, layer, probe);
  std::vector<TokenFeatures> fit(feats.begin(), feats.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::vector<TokenFeatures> hold(feats.end() - static_cast<std::ptrdiff_t>(n_hold), feats.end());
  auto head = train_span_head(fit, hold, p.config.d_model, h, seed);
  auto val_feats = layer_features(p, layer, val_set);
  return {layer, layer_label(layer, p.config.n_layers), head.f1(val_feats, h.max_answer_len), n};
}

/// layer × checkpoint probe F1 over a series of pre-training checkpoints.
struct ProbeSeries {
  std::vector<int> layers;
  std::vector<int> epochs;
  MatD f1;  // layers × epochs

  std::string to_csv(int n_layers) const {
    std::ostringstream os;
    os.precision(17);
    os << "layer,epoch,f1\n";
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t e = 0; e < epochs.size(); ++e) {
        os << layer_label(layers[l], n_layers) << ',' << epochs[e] << ','
           << f1(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(e)) << '\n';
      }
    }
    return os.str();
  }
};

template <typename T>
ProbeSeries pretrain_series_probe(const std::vector<std::pair<int, model::TransformerParams<T>>>& series,
                                  const std::vector<int>& layers, const std::vector<data::EncodedExample>& train_pool,
                                  const std::vector<data::EncodedExample>& val_set, const ProbeHyper& h,
                                  std::uint64_t seed) {
  if (series.empty()) throw ValidationError("pretrain_series_probe: empty checkpoint series");
  if (layers.empty()) throw ValidationError("pretrain_series_probe: no layers requested");
  ProbeSeries out;
  out.layers = layers;
  out.f1 = MatD(static_cast<Eigen::Index>(layers.size()), static_cast<Eigen::Index>(series.size()));
  for (std::size_t c = 0; c < series.size(); ++c) {
    out.epochs.push_back(series[c].first);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.f1(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c)) =
          layer_probe(series[c].second, layers[l], train_pool, val_set, h, seed).f1;
    }
  }
  return out;
}

}  // namespace srlprobe::repsim

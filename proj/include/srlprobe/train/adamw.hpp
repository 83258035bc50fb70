#pragma once

#include <cmath>
#include <cstdint>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/params.hpp"
#include "srlprobe/train/regime.hpp"

namespace srlprobe::train {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

template <typename T>
struct AdamWState {
  model::TransformerParams<T> m;
  model::TransformerParams<T> v;
  std::int64_t step = 0;

  static AdamWState init(const model::ModelConfig& c) {
    return {model::TransformerParams<T>::zeros(c), model::TransformerParams<T>::zeros(c), 0};
  }
};

namespace detail {

/// Calls f(flat index) for every trainable entry of one tensor.
template <class Tensor, class F>
void for_trainable(const TrainableSet& ts, const std::string& name, const Tensor& t, F&& f) {
  if (!ts.contains(name)) return;
  if (name == "tok_emb" && ts.tok_emb_row) {
    const Eigen::Index row = *ts.tok_emb_row;
    if (row < 0 || row >= t.rows()) throw ValidationError("adamw: trainable row out of range");
    for (Eigen::Index c = 0; c < t.cols(); ++c) f(row * t.cols() + c);
    return;
  }
  for (Eigen::Index i = 0; i < t.size(); ++i) f(i);
}

}  // namespace detail

/// Global norm over the trainable entries of `g`.
template <typename T>
double grad_norm(const model::TransformerParams<T>& g, const TrainableSet& ts) {
  double sq = 0.0;
  model::visit_tensors([&](const std::string& name, model::TensorKind, const auto& t) {
    detail::for_trainable(ts, name, t, [&](Eigen::Index i) {
      const double x = static_cast<double>(t.data()[i]);
      sq += x * x;
    });
  }, g);
  return std::sqrt(sq);
}

/// One AdamW step on the trainable entries; everything else is left
/// untouched. Returns the pre-clip gradient norm.
template <typename T>
double adamw_step(AdamWState<T>& st, model::TransformerParams<T>& p, const model::TransformerParams<T>& g,
                  const TrainableSet& ts, const AdamWConfig& cfg) {
  const double norm = grad_norm(g, ts);
  if (!std::isfinite(norm)) throw NumericalError("adamw: non-finite gradient");
  const double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  model::visit_tensors([&](const std::string& name, model::TensorKind kind, auto& w, const auto& gt, auto& m, auto& v) {
    const double wd = model::decays(kind) ? cfg.weight_decay : 0.0;
    detail::for_trainable(ts, name, w, [&](Eigen::Index i) {
      const double gi = static_cast<double>(gt.data()[i]) * scale;
      double mi = cfg.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg.beta1) * gi;
      double vi = cfg.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg.beta2) * gi * gi;
      m.data()[i] = static_cast<T>(mi);
      v.data()[i] = static_cast<T>(vi);
      double wi = static_cast<double>(w.data()[i]);
      wi -= cfg.lr * wd * wi;
      wi -= cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      w.data()[i] = static_cast<T>(wi);
    });
  }, p, g, st.m, st.v);
  return norm;
}

}  // namespace srlprobe::train

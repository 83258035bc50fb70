#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reference_model.hpp"
#include "srlprobe/eval/span.hpp"
#include "srlprobe/model/loss.hpp"

namespace srlprobe::testing {

/// Step-by-step evaluation of the linear CKA formula with explicit loops.
inline double cka_oracle(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  const int n = static_cast<int>(X.rows());
  auto centre = [n](const Eigen::MatrixXd& A) {
    Eigen::MatrixXd C = A;
    for (int j = 0; j < A.cols(); ++j) {
      double mean = 0;
      for (int i = 0; i < n; ++i) mean += A(i, j);
      mean /= n;
      for (int i = 0; i < n; ++i) C(i, j) -= mean;
    }
    return C;
  };
  auto gram_norm_sq = [n](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    double s = 0;
    for (int a = 0; a < A.cols(); ++a) {
      for (int b = 0; b < B.cols(); ++b) {
        double dot = 0;
        for (int i = 0; i < n; ++i) dot += A(i, a) * B(i, b);
        s += dot * dot;
      }
    }
    return s;
  };
  Eigen::MatrixXd Xc = centre(X), Yc = centre(Y);
  return gram_norm_sq(Yc, Xc) / (std::sqrt(gram_norm_sq(Xc, Xc)) * std::sqrt(gram_norm_sq(Yc, Yc)));
}

/// Best (start, end) over every allowed pair; ties keep the first pair found.
inline eval::TokenSpan brute_force_span(const std::vector<double>& s, const std::vector<double>& e,
                                        const std::vector<std::uint8_t>& m, int max_len) {
  eval::TokenSpan best{-1, -1};
  double best_score = 0;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    for (int j = 0; j < static_cast<int>(s.size()); ++j) {
      if (!m[i] || !m[j] || j < i || j > i + max_len - 1) continue;
      double v = s[i] + e[j];
      if (best.start < 0 || v > best_score) {
        best = {i, j};
        best_score = v;
      }
    }
  }
  return best;
}

struct FdResult {
  int checked = 0;
  double worst = 0.0;
  std::string worst_at;
};

/// Central finite differences on `count` random scalars of a jittered
/// double-precision model, against the analytic gradient.
inline FdResult finite_difference_check(const model::ModelConfig& c, const model::PackedBatch& b,
                                        const model::LossSpec& spec, std::uint64_t seed, int count = 60) {
  using model::TensorKind;
  auto p = model::init_params<double>(c, seed);
  jitter(p, seed + 1, 0.3);
  auto g = model::gradients(p, b, spec);
  struct Ref {
    std::string name;
    Eigen::Index index;
  };
  std::vector<Ref> all;
  model::visit_tensors([&](const std::string& name, TensorKind, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) all.push_back({name, i});
  }, p);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.insert(all.begin(), {{"qa.w_start", 1}, {"qa.w_end", 2}, {"tok_emb", b.ids[0] * c.d_model}});
  auto loss_of = [&] {
    auto out = model::forward(p, b);
    if (spec.kind == model::LossKind::Lm) return model::lm_loss(out.lm_logits, b, spec.label_smoothing, nullptr);
    return model::qa_loss(out.qa_start, out.qa_end, b, spec.targets, nullptr, nullptr);
  };
  const double h = 1e-4;
  FdResult r;
  for (const auto& ref : all) {
    if (r.checked >= count) break;
    double analytic = 0;
    double* x = nullptr;
    model::visit_tensors([&](const std::string& name, TensorKind, const auto& t) {
      if (name == ref.name) analytic = t.data()[ref.index];
    }, g.grads);
    model::visit_tensors([&](const std::string& name, TensorKind, auto& t) {
      if (name == ref.name) x = t.data() + ref.index;
    }, p);
    const double orig = *x;
    *x = orig + h;
    const double up = loss_of();
    *x = orig - h;
    const double down = loss_of();
    *x = orig;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8);
    if (rel > r.worst) {
      r.worst = rel;
      r.worst_at = ref.name + "[" + std::to_string(ref.index) + "]";
    }
    ++r.checked;
  }
  return r;
}

inline model::PackedBatch fd_lm_batch() {
  model::PackedBatch b;
  b.add(std::vector<int>{1, 4, 2, 8, 5, 7});
  b.add(std::vector<int>{3, 3, 10, 0});
  return b;
}

inline model::PackedBatch fd_qa_batch() {
  model::PackedBatch b;
  b.add(std::vector<int>{1, 4, 2, 8, 5, 7, 9});
  b.add(std::vector<int>{3, 2, 10, 0, 6});
  return b;
}

}  // namespace srlprobe::testing

#pragma once

// Straight-loop reference decoder used as an independent oracle for the
// Eigen implementation. Double precision, one sequence, no dropout.

#include <cmath>
#include <vector>

#include "srlprobe/model/params.hpp"

namespace srlprobe::testing {

struct ReferenceOutput {
  std::vector<std::vector<double>> lm_logits;  // [t][v]
  std::vector<double> start, end;
};

inline std::vector<double> ref_layer_norm(const std::vector<double>& x, const auto& g, const auto& b) {
  const std::size_t d = x.size();
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  std::vector<double> y(d);
  for (std::size_t j = 0; j < d; ++j) {
    y[j] = (x[j] - mean) / std::sqrt(var + 1e-5) * static_cast<double>(g[static_cast<Eigen::Index>(j)]) +
           static_cast<double>(b[static_cast<Eigen::Index>(j)]);
  }
  return y;
}

inline std::vector<double> ref_linear(const std::vector<double>& x, const auto& W, const auto& bias) {
  std::vector<double> y(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index o = 0; o < W.rows(); ++o) {
    double acc = static_cast<double>(bias[o]);
    for (Eigen::Index i = 0; i < W.cols(); ++i) acc += static_cast<double>(W(o, i)) * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

template <typename T>
ReferenceOutput reference_forward(const model::TransformerParams<T>& p, const std::vector<int>& ids,
                                  bool skip_attention = false, bool skip_mlp = false) {
  const auto& c = p.config;
  const std::size_t n = ids.size(), d = static_cast<std::size_t>(c.d_model);
  const int H = c.n_heads, dh = c.head_dim();
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      x[t][j] = static_cast<double>(p.tok_emb(ids[t], static_cast<Eigen::Index>(j))) +
                static_cast<double>(p.pos_emb(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
    }
  }
  for (const auto& L : p.layers) {
    if (!skip_attention) {
      std::vector<std::vector<double>> q(n), k(n), v(n);
      for (std::size_t t = 0; t < n; ++t) {
        auto a = ref_layer_norm(x[t], L.ln1_g, L.ln1_b);
        q[t] = ref_linear(a, L.wq, L.bq);
        k[t] = ref_linear(a, L.wk, L.bk);
        v[t] = ref_linear(a, L.wv, L.bv);
      }
      std::vector<std::vector<double>> y(n, std::vector<double>(d, 0.0));
      for (int h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> s(i + 1);
          double mx = -1e300;
          for (std::size_t j = 0; j <= i; ++j) {
            double dot = 0;
            for (int e = 0; e < dh; ++e) dot += q[i][static_cast<std::size_t>(h * dh + e)] * k[j][static_cast<std::size_t>(h * dh + e)];
            s[j] = dot / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, s[j]);
          }
          double sum = 0;
          for (auto& e : s) sum += (e = std::exp(e - mx));
          for (std::size_t j = 0; j <= i; ++j) {
            for (int e = 0; e < dh; ++e) y[i][static_cast<std::size_t>(h * dh + e)] += s[j] / sum * v[j][static_cast<std::size_t>(h * dh + e)];
          }
        }
      }
      for (std::size_t t = 0; t < n; ++t) {
        auto o = ref_linear(y[t], L.wo, L.bo);
        for (std::size_t j = 0; j < d; ++j) x[t][j] += o[j];
      }
    }
    if (!skip_mlp) {
      for (std::size_t t = 0; t < n; ++t) {
        auto a = ref_layer_norm(x[t], L.ln2_g, L.ln2_b);
        auto h = ref_linear(a, L.w1, L.b1);
        for (auto& e : h) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
        auto f = ref_linear(h, L.w2, L.b2);
        for (std::size_t j = 0; j < d; ++j) x[t][j] += f[j];
      }
    }
  }
  ReferenceOutput out;
  for (std::size_t t = 0; t < n; ++t) {
    auto hN = ref_layer_norm(x[t], p.lnf_g, p.lnf_b);
    std::vector<double> logits(static_cast<std::size_t>(c.vocab));
    for (int v = 0; v < c.vocab; ++v) {
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += hN[j] * static_cast<double>(p.tok_emb(v, static_cast<Eigen::Index>(j)));
      logits[static_cast<std::size_t>(v)] = acc;
    }
    out.lm_logits.push_back(logits);
    double s = 0, e = 0;
    for (std::size_t j = 0; j < d; ++j) {
      s += hN[j] * static_cast<double>(p.qa_start[static_cast<Eigen::Index>(j)]);
      e += hN[j] * static_cast<double>(p.qa_end[static_cast<Eigen::Index>(j)]);
    }
    out.start.push_back(s);
    out.end.push_back(e);
  }
  return out;
}

/// Spreads every tensor away from its init so that all gradient paths are
/// exercised (non-unit gains, non-zero biases).
template <typename T>
void jitter(model::TransformerParams<T>& p, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  model::visit_tensors([&](const std::string&, model::TensorKind, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += static_cast<T>(nd(rng));
  }, p);
}

}  // namespace srlprobe::testing

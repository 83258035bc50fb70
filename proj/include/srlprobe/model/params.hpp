#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "srlprobe/model/config.hpp"

namespace srlprobe::model {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// How a tensor participates in initialization and weight decay.
enum class TensorKind { Weight, Bias, NormGain, NormBias, Embedding };

inline bool decays(TensorKind k) noexcept {
  return k == TensorKind::Weight || k == TensorKind::Embedding;
}

/// Linear maps are stored out×in, so y = x Wᵀ + b and feed-forward unit j is
/// row j of w1 and column j of w2.
template <typename T>
struct LayerParams {
  Mat<T> wq, wk, wv, wo;
  RowVec<T> bq, bk, bv, bo;
  RowVec<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat<T> w1;  // d_ff × d
  RowVec<T> b1;
  Mat<T> w2;  // d × d_ff
  RowVec<T> b2;
};

template <typename T>
struct TransformerParams {
  ModelConfig config;
  Mat<T> tok_emb;  // V × d, also the LM output projection
  Mat<T> pos_emb;  // max_seq × d
  std::vector<LayerParams<T>> layers;
  RowVec<T> lnf_g, lnf_b;
  RowVec<T> qa_start, qa_end;

  /// Allocates every tensor with the right shape, filled with zeros.
  static TransformerParams zeros(const ModelConfig& c) {
    TransformerParams p;
    p.config = c;
    const int d = c.d_model, f = c.d_ff();
    p.tok_emb = Mat<T>::Zero(c.vocab, d);
    p.pos_emb = Mat<T>::Zero(c.max_seq, d);
    p.layers.resize(static_cast<std::size_t>(c.n_layers));
    for (auto& l : p.layers) {
      l.wq = l.wk = l.wv = l.wo = Mat<T>::Zero(d, d);
      l.bq = l.bk = l.bv = l.bo = RowVec<T>::Zero(d);
      l.ln1_g = l.ln1_b = l.ln2_g = l.ln2_b = RowVec<T>::Zero(d);
      l.w1 = Mat<T>::Zero(f, d);
      l.b1 = RowVec<T>::Zero(f);
      l.w2 = Mat<T>::Zero(d, f);
      l.b2 = RowVec<T>::Zero(d);
    }
    p.lnf_g = p.lnf_b = RowVec<T>::Zero(d);
    p.qa_start = p.qa_end = RowVec<T>::Zero(d);
    return p;
  }

  template <typename U>
  TransformerParams<U> cast() const {
    TransformerParams<U> out = TransformerParams<U>::zeros(config);
    visit_tensors([](const std::string&, TensorKind, const auto& src, auto& dst) {
      dst = src.template cast<U>();
    }, *this, out);
    return out;
  }
};

namespace detail {

template <class F, class... P>
void visit_layer(F& f, const std::string& pre, P&... ls) {
  f(pre + "attn.wq", TensorKind::Weight, ls.wq...);
  f(pre + "attn.bq", TensorKind::Bias, ls.bq...);
  f(pre + "attn.wk", TensorKind::Weight, ls.wk...);
  f(pre + "attn.bk", TensorKind::Bias, ls.bk...);
  f(pre + "attn.wv", TensorKind::Weight, ls.wv...);
  f(pre + "attn.bv", TensorKind::Bias, ls.bv...);
  f(pre + "attn.wo", TensorKind::Weight, ls.wo...);
  f(pre + "attn.bo", TensorKind::Bias, ls.bo...);
  f(pre + "ln1.gain", TensorKind::NormGain, ls.ln1_g...);
  f(pre + "ln1.bias", TensorKind::NormBias, ls.ln1_b...);
  f(pre + "ln2.gain", TensorKind::NormGain, ls.ln2_g...);
  f(pre + "ln2.bias", TensorKind::NormBias, ls.ln2_b...);
  f(pre + "mlp.w1", TensorKind::Weight, ls.w1...);
  f(pre + "mlp.b1", TensorKind::Bias, ls.b1...);
  f(pre + "mlp.w2", TensorKind::Weight, ls.w2...);
  f(pre + "mlp.b2", TensorKind::Bias, ls.b2...);
}

}  // namespace detail

/// Calls f(name, kind, tensor_from_each_param_set...) for every tensor in a
/// fixed order. All parameter sets must share one config.
template <class F, class P0, class... P>
void visit_tensors(F&& f, P0& p0, P&... ps) {
  f(std::string("tok_emb"), TensorKind::Embedding, p0.tok_emb, ps.tok_emb...);
  f(std::string("pos_emb"), TensorKind::Embedding, p0.pos_emb, ps.pos_emb...);
  for (std::size_t i = 0; i < p0.layers.size(); ++i) {
    detail::visit_layer(f, "layers." + std::to_string(i) + ".", p0.layers[i], ps.layers[i]...);
  }
  f(std::string("ln_f.gain"), TensorKind::NormGain, p0.lnf_g, ps.lnf_g...);
  f(std::string("ln_f.bias"), TensorKind::NormBias, p0.lnf_b, ps.lnf_b...);
  f(std::string("qa.w_start"), TensorKind::Weight, p0.qa_start, ps.qa_start...);
  f(std::string("qa.w_end"), TensorKind::Weight, p0.qa_end, ps.qa_end...);
}

/// Number of scalars actually allocated, split like count_params.
template <typename T>
ParamCount audit_params(const TransformerParams<T>& p) {
  ParamCount c;
  visit_tensors([&](const std::string& name, TensorKind, const auto& t) {
    const auto n = static_cast<std::int64_t>(t.size());
    if (name == "tok_emb" || name == "pos_emb") {
      c.total += n;
    } else if (name.starts_with("qa.")) {
      c.qa_head += n;
    } else {
      c.transformer += n;
    }
  }, p);
  c.total += c.transformer;
  return c;
}

inline constexpr double kInitStd = 0.02;

/// Normal(0, 0.02) weights and embeddings, zero biases, unit LN gains.
template <typename T>
TransformerParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  auto p = TransformerParams<T>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  visit_tensors([&](const std::string&, TensorKind kind, auto& t) {
    switch (kind) {
      case TensorKind::Weight:
      case TensorKind::Embedding:
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(normal(rng));
        break;
      case TensorKind::NormGain:
        t.setOnes();
        break;
      default:
        t.setZero();
        break;
    }
  }, p);
  return p;
}

/// Fresh QA head drawn from its own stream (used when fine-tuning starts).
template <typename T>
void reinit_qa_head(TransformerParams<T>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x51A7E5EEDULL);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (Eigen::Index i = 0; i < p.qa_start.size(); ++i) p.qa_start[i] = static_cast<T>(normal(rng));
  for (Eigen::Index i = 0; i < p.qa_end.size(); ++i) p.qa_end[i] = static_cast<T>(normal(rng));
}

template <typename T>
bool bit_identical(const TransformerParams<T>& a, const TransformerParams<T>& b) {
  if (!(a.config == b.config)) return false;
  bool same = true;
  visit_tensors([&](const std::string&, TensorKind, const auto& x, const auto& y) {
    if (!same) return;
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
      same = false;
      return;
    }
    same = std::memcmp(x.data(), y.data(), sizeof(T) * static_cast<std::size_t>(x.size())) == 0;
  }, a, b);
  return same;
}

}  // namespace srlprobe::model

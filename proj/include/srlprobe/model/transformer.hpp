#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/params.hpp"

namespace srlprobe::model {

/// Several variable-length sequences laid end to end. Attention never crosses
/// a sequence boundary and positions restart at 0 for each sequence.
struct PackedBatch {
  std::vector<int> ids;
  std::vector<int> offsets = {0};

  void add(std::span<const int> seq) {
    ids.insert(ids.end(), seq.begin(), seq.end());
    offsets.push_back(static_cast<int>(ids.size()));
  }
  int sequences() const noexcept { return static_cast<int>(offsets.size()) - 1; }
  int tokens() const noexcept { return static_cast<int>(ids.size()); }
  int begin(int b) const noexcept { return offsets[static_cast<std::size_t>(b)]; }
  int length(int b) const noexcept {
    return offsets[static_cast<std::size_t>(b) + 1] - offsets[static_cast<std::size_t>(b)];
  }
};

struct CaptureSpec {
  bool residual = false;   // embeddings, each block output, final norm
  bool ff_hidden = false;  // post-GELU feed-forward hidden, per block
};

struct ForwardOptions {
  bool causal = true;
  bool train = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
  bool want_lm = true;
  bool want_qa = true;
  bool keep_cache = false;  // required for backward
  CaptureSpec capture;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <typename T>
struct LayerCache {
  Mat<T> x_in;
  LayerNormCache<T> ln1;
  Mat<T> a1, q, k, v, y;
  std::vector<Mat<T>> probs;       // [seq * heads + head], pre-dropout
  std::vector<Mat<T>> probs_drop;  // dropout multipliers, empty when off
  Mat<T> o_drop;                   // multiplier on attention output
  Mat<T> x2;
  LayerNormCache<T> ln2;
  Mat<T> a2, h, g, g_drop, gd, f_drop;
};

template <typename T>
struct ForwardResult {
  Mat<T> lm_logits;  // tokens × V
  Vec<T> qa_start;   // tokens
  Vec<T> qa_end;
  std::vector<Mat<T>> residual;   // n_layers + 2 entries when captured
  std::vector<Mat<T>> ff_hidden;  // n_layers entries when captured
  // cache
  std::vector<LayerCache<T>> layers;
  Mat<T> x_final;
  LayerNormCache<T> lnf;
  Mat<T> hidden;  // final-norm output H
};

namespace detail {

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const RowVec<T>& g, const RowVec<T>& b, LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat<T> xhat(n, d);
  Vec<T> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) mean += static_cast<double>(x(i, j));
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      double c = static_cast<double>(x(i, j)) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double r = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[i] = static_cast<T>(r);
    for (Eigen::Index j = 0; j < d; ++j) {
      xhat(i, j) = static_cast<T>((static_cast<double>(x(i, j)) - mean) * r);
    }
  }
  Mat<T> y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

/// Returns dL/dx; accumulates dL/dgain and dL/dbias when pointers are given.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& c, const RowVec<T>& g,
                           RowVec<T>* dg, RowVec<T>* db) {
  if (dg) *dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  if (db) *db += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * g.array();
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Mat<T> dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      m1 += static_cast<double>(dxhat(i, j));
      m2 += static_cast<double>(dxhat(i, j)) * static_cast<double>(c.xhat(i, j));
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    const double r = static_cast<double>(c.rstd[i]);
    for (Eigen::Index j = 0; j < d; ++j) {
      dx(i, j) = static_cast<T>(
          r * (static_cast<double>(dxhat(i, j)) - m1 - static_cast<double>(c.xhat(i, j)) * m2));
    }
  }
  return dx;
}

template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.3989422804014327);
  return cdf + x * pdf;
}

/// Inverted-dropout multiplier matrix: 0 with probability p, 1/(1-p) otherwise.
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  Mat<T> m(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m.data()[i] = u < p ? T(0) : keep_scale;
  }
  return m;
}

}  // namespace detail

/// GPT-style pre-LN decoder over a packed batch. Returns LM logits (tied to
/// the token embedding), QA start/end logits, and any requested captures.
template <typename T>
ForwardResult<T> forward(const TransformerParams<T>& p, const PackedBatch& batch,
                         const ForwardOptions& opt = {}) {
  const auto& c = p.config;
  const int d = c.d_model, H = c.n_heads, dh = c.head_dim();
  const int n = batch.tokens();
  for (int b = 0; b < batch.sequences(); ++b) {
    if (batch.length(b) > c.max_seq) {
      throw ValidationError("forward: sequence length " + std::to_string(batch.length(b)) +
                            " exceeds max_seq " + std::to_string(c.max_seq));
    }
    if (batch.length(b) == 0) throw ValidationError("forward: empty sequence");
  }
  for (int id : batch.ids) {
    if (id < 0 || id >= c.vocab) throw ValidationError("forward: token id out of range");
  }
  const bool dropout = opt.train && c.dropout > 0.0f;
  std::mt19937_64 rng(opt.dropout_seed);

  ForwardResult<T> out;
  Mat<T> x(n, d);
  for (int b = 0; b < batch.sequences(); ++b) {
    for (int t = 0; t < batch.length(b); ++t) {
      const int i = batch.begin(b) + t;
      x.row(i) = p.tok_emb.row(batch.ids[static_cast<std::size_t>(i)]) + p.pos_emb.row(t);
    }
  }
  if (opt.capture.residual) out.residual.push_back(x);

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  if (opt.keep_cache) out.layers.resize(p.layers.size());

  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const auto& L = p.layers[li];
    LayerCache<T> lc;
    lc.x_in = x;
    lc.a1 = detail::layer_norm(x, L.ln1_g, L.ln1_b, &lc.ln1);
    lc.q = (lc.a1 * L.wq.transpose()).rowwise() + L.bq;
    lc.k = (lc.a1 * L.wk.transpose()).rowwise() + L.bk;
    lc.v = (lc.a1 * L.wv.transpose()).rowwise() + L.bv;
    lc.y = Mat<T>::Zero(n, d);
    lc.probs.reserve(static_cast<std::size_t>(batch.sequences() * H));
    for (int b = 0; b < batch.sequences(); ++b) {
      const int off = batch.begin(b), len = batch.length(b);
      for (int h = 0; h < H; ++h) {
        Mat<T> s = lc.q.block(off, h * dh, len, dh) * lc.k.block(off, h * dh, len, dh).transpose();
        s *= scale;
        for (int i = 0; i < len; ++i) {
          if (opt.causal) {
            for (int j = i + 1; j < len; ++j) s(i, j) = neg_inf;
          }
          const int last = opt.causal ? i : len - 1;
          T mx = s(i, 0);
          for (int j = 1; j <= last; ++j) mx = std::max(mx, s(i, j));
          double sum = 0.0;
          for (int j = 0; j <= last; ++j) {
            T e = std::exp(s(i, j) - mx);
            s(i, j) = e;
            sum += static_cast<double>(e);
          }
          const T inv = static_cast<T>(1.0 / sum);
          for (int j = 0; j <= last; ++j) s(i, j) *= inv;
          for (int j = last + 1; j < len; ++j) s(i, j) = T(0);
        }
        if (dropout) {
          Mat<T> m = detail::dropout_mask<T>(len, len, c.dropout, rng);
          lc.y.block(off, h * dh, len, dh).noalias() =
              (s.array() * m.array()).matrix() * lc.v.block(off, h * dh, len, dh);
          lc.probs_drop.push_back(std::move(m));
        } else {
          lc.y.block(off, h * dh, len, dh).noalias() = s * lc.v.block(off, h * dh, len, dh);
        }
        lc.probs.push_back(std::move(s));
      }
    }
    Mat<T> o = (lc.y * L.wo.transpose()).rowwise() + L.bo;
    if (dropout) {
      lc.o_drop = detail::dropout_mask<T>(n, d, c.dropout, rng);
      o.array() *= lc.o_drop.array();
    }
    lc.x2 = x + o;
    lc.a2 = detail::layer_norm(lc.x2, L.ln2_g, L.ln2_b, &lc.ln2);
    lc.h = (lc.a2 * L.w1.transpose()).rowwise() + L.b1;
    lc.g = lc.h.unaryExpr([](T v) { return detail::gelu(v); });
    if (opt.capture.ff_hidden) out.ff_hidden.push_back(lc.g);
    if (dropout) {
      lc.g_drop = detail::dropout_mask<T>(n, c.d_ff(), c.dropout, rng);
      lc.gd = lc.g.array() * lc.g_drop.array();
    }
    const Mat<T>& gd = dropout ? lc.gd : lc.g;
    Mat<T> f = (gd * L.w2.transpose()).rowwise() + L.b2;
    if (dropout) {
      lc.f_drop = detail::dropout_mask<T>(n, d, c.dropout, rng);
      f.array() *= lc.f_drop.array();
    }
    x = lc.x2 + f;
    if (opt.capture.residual) out.residual.push_back(x);
    if (opt.keep_cache) out.layers[li] = std::move(lc);
  }

  out.hidden = detail::layer_norm(x, p.lnf_g, p.lnf_b, opt.keep_cache ? &out.lnf : nullptr);
  if (opt.keep_cache) out.x_final = x;
  if (opt.capture.residual) out.residual.push_back(out.hidden);
  if (opt.want_lm) out.lm_logits.noalias() = out.hidden * p.tok_emb.transpose();
  if (opt.want_qa) {
    out.qa_start = out.hidden * p.qa_start.transpose();
    out.qa_end = out.hidden * p.qa_end.transpose();
  }
  return out;
}

/// Which parameter groups receive gradients. Groups that are off are left at
/// zero and their weight gradients are never computed; input gradients still
/// flow through them when something upstream needs it.
struct GradGroups {
  bool tok_emb = true;
  bool pos_emb = true;
  bool blocks = true;
  bool final_norm = true;
  bool qa_head = true;

  bool needs_input_grad() const noexcept { return tok_emb || pos_emb; }
};

/// Reverse pass given upstream gradients on LM logits and/or QA logits.
/// `fwd` must come from forward(..., keep_cache = true).
template <typename T>
TransformerParams<T> backward(const TransformerParams<T>& p, const PackedBatch& batch,
                              const ForwardResult<T>& fwd, const std::type_identity_t<Mat<T>>* d_lm,
                              const std::type_identity_t<Vec<T>>* d_start,
                              const std::type_identity_t<Vec<T>>* d_end,
                              const GradGroups& groups = {}) {
  const auto& c = p.config;
  const int d = c.d_model, H = c.n_heads, dh = c.head_dim();
  const int n = batch.tokens();
  if (fwd.layers.size() != p.layers.size()) throw ValidationError("backward: forward cache missing");
  auto g = TransformerParams<T>::zeros(c);

  Mat<T> dH = Mat<T>::Zero(n, d);
  if (d_lm) {
    dH.noalias() += *d_lm * p.tok_emb;
    if (groups.tok_emb) g.tok_emb.noalias() += d_lm->transpose() * fwd.hidden;
  }
  if (d_start) {
    dH.noalias() += *d_start * p.qa_start;
    if (groups.qa_head) g.qa_start = d_start->transpose() * fwd.hidden;
  }
  if (d_end) {
    dH.noalias() += *d_end * p.qa_end;
    if (groups.qa_head) g.qa_end = d_end->transpose() * fwd.hidden;
  }

  const bool need_any_below = groups.blocks || groups.needs_input_grad();
  if (!need_any_below && !groups.final_norm) return g;
  Mat<T> dx = detail::layer_norm_backward(dH, fwd.lnf, p.lnf_g, groups.final_norm ? &g.lnf_g : nullptr,
                                          groups.final_norm ? &g.lnf_b : nullptr);
  if (!need_any_below) return g;

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    const auto& lc = fwd.layers[li];
    auto& G = g.layers[li];
    const bool wg = groups.blocks;
    const bool dropout = lc.o_drop.size() != 0;

    // feed-forward sublayer
    Mat<T> df = dx;
    if (dropout) df.array() *= lc.f_drop.array();
    const Mat<T>& gd = dropout ? lc.gd : lc.g;
    if (wg) {
      G.w2.noalias() += df.transpose() * gd;
      G.b2 += df.colwise().sum();
    }
    Mat<T> dg = df * L.w2;
    if (dropout) dg.array() *= lc.g_drop.array();
    Mat<T> dh_pre = dg.array() * lc.h.unaryExpr([](T v) { return detail::gelu_grad(v); }).array();
    if (wg) {
      G.w1.noalias() += dh_pre.transpose() * lc.a2;
      G.b1 += dh_pre.colwise().sum();
    }
    Mat<T> da2 = dh_pre * L.w1;
    Mat<T> dx2 = dx + detail::layer_norm_backward(da2, lc.ln2, L.ln2_g, wg ? &G.ln2_g : nullptr,
                                                  wg ? &G.ln2_b : nullptr);

    // attention sublayer
    Mat<T> dout = dx2;
    if (dropout) dout.array() *= lc.o_drop.array();
    if (wg) {
      G.wo.noalias() += dout.transpose() * lc.y;
      G.bo += dout.colwise().sum();
    }
    Mat<T> dy = dout * L.wo;
    Mat<T> dq = Mat<T>::Zero(n, d), dk = Mat<T>::Zero(n, d), dv = Mat<T>::Zero(n, d);
    std::size_t pi = 0;
    for (int b = 0; b < batch.sequences(); ++b) {
      const int off = batch.begin(b), len = batch.length(b);
      for (int h = 0; h < H; ++h, ++pi) {
        const Mat<T>& P = lc.probs[pi];
        auto dy_h = dy.block(off, h * dh, len, dh);
        auto v_h = lc.v.block(off, h * dh, len, dh);
        Mat<T> dP = dy_h * v_h.transpose();
        if (dropout) {
          const Mat<T>& m = lc.probs_drop[pi];
          dv.block(off, h * dh, len, dh).noalias() = (P.array() * m.array()).matrix().transpose() * dy_h;
          dP.array() *= m.array();
        } else {
          dv.block(off, h * dh, len, dh).noalias() = P.transpose() * dy_h;
        }
        // softmax backward, row-wise
        Mat<T> dS(len, len);
        for (int i = 0; i < len; ++i) {
          double dot = 0.0;
          for (int j = 0; j < len; ++j) dot += static_cast<double>(dP(i, j)) * static_cast<double>(P(i, j));
          for (int j = 0; j < len; ++j) dS(i, j) = P(i, j) * (dP(i, j) - static_cast<T>(dot)) * scale;
        }
        dq.block(off, h * dh, len, dh).noalias() = dS * lc.k.block(off, h * dh, len, dh);
        dk.block(off, h * dh, len, dh).noalias() = dS.transpose() * lc.q.block(off, h * dh, len, dh);
      }
    }
    if (wg) {
      G.wq.noalias() += dq.transpose() * lc.a1;
      G.bq += dq.colwise().sum();
      G.wk.noalias() += dk.transpose() * lc.a1;
      G.bk += dk.colwise().sum();
      G.wv.noalias() += dv.transpose() * lc.a1;
      G.bv += dv.colwise().sum();
    }
    Mat<T> da1 = dq * L.wq;
    da1.noalias() += dk * L.wk;
    da1.noalias() += dv * L.wv;
    dx = dx2 + detail::layer_norm_backward(da1, lc.ln1, L.ln1_g, wg ? &G.ln1_g : nullptr,
                                           wg ? &G.ln1_b : nullptr);
  }

  for (int b = 0; b < batch.sequences(); ++b) {
    for (int t = 0; t < batch.length(b); ++t) {
      const int i = batch.begin(b) + t;
      if (groups.tok_emb) g.tok_emb.row(batch.ids[static_cast<std::size_t>(i)]) += dx.row(i);
      if (groups.pos_emb) g.pos_emb.row(t) += dx.row(i);
    }
  }
  return g;
}

}  // namespace srlprobe::model

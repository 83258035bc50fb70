#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/model/params.hpp"
#include "srlprobe/model/transformer.hpp"

namespace srlprobe::repsim {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Linear CKA on column-centred copies of X and Y.
inline double linear_cka(const MatD& X, const MatD& Y) {
  if (X.rows() != Y.rows()) throw ValidationError("linear_cka: row counts differ");
  if (X.rows() < 2) throw ValidationError("linear_cka: need at least two rows");
  if (!X.allFinite() || !Y.allFinite()) throw NumericalError("linear_cka: non-finite activations");
  const MatD Xc = X.rowwise() - X.colwise().mean();
  const MatD Yc = Y.rowwise() - Y.colwise().mean();
  const double xx = (Xc.transpose() * Xc).norm();
  const double yy = (Yc.transpose() * Yc).norm();
  if (xx == 0.0 || yy == 0.0) throw UndefinedError("linear_cka: zero-variance activation matrix");
  const double xy = (Yc.transpose() * Xc).squaredNorm();
  return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

/// Mean of the rows of `tokens` whose mask entry is set.
template <typename Derived>
Eigen::RowVectorXd pool_activations(const Eigen::MatrixBase<Derived>& tokens, std::span<const std::uint8_t> keep) {
  if (static_cast<Eigen::Index>(keep.size()) != tokens.rows()) throw ValidationError("pool_activations: mask length mismatch");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(tokens.cols());
  int n = 0;
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    sum += tokens.row(i).template cast<double>();
    ++n;
  }
  if (n == 0) throw ValidationError("pool_activations: every position is padding");
  return sum / n;
}

inline std::string layer_label(int layer, int n_layers) {
  if (layer == 0) return "embeddings";
  if (layer == n_layers + 1) return "final_norm";
  return "block_" + std::to_string(layer);
}

/// Residual-stream activations at every probe layer (embeddings, each block,
/// final norm), mean-pooled over each example's non-padding tokens.
template <typename T>
std::vector<MatD> pooled_layer_activations(const model::TransformerParams<T>& p,
                                           const std::vector<data::EncodedExample>& xs, int batch_size = 64) {
  const int layers = p.config.n_layers + 2;
  std::vector<MatD> out(static_cast<std::size_t>(layers), MatD(static_cast<Eigen::Index>(xs.size()), p.config.d_model));
  model::ForwardOptions opt;
  opt.want_lm = false;
  opt.want_qa = false;
  opt.capture.residual = true;
  for (std::size_t b0 = 0; b0 < xs.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(xs.size(), b0 + static_cast<std::size_t>(batch_size));
    model::PackedBatch batch;
    for (std::size_t i = b0; i < b1; ++i) batch.add({xs[i].input_ids.data(), static_cast<std::size_t>(xs[i].length)});
    auto fwd = model::forward(p, batch, opt);
    for (std::size_t i = b0; i < b1; ++i) {
      const int s = static_cast<int>(i - b0);
      // Packed sequences hold no padding, so every position is kept.
      std::vector<std::uint8_t> keep(static_cast<std::size_t>(batch.length(s)), 1);
      for (int l = 0; l < layers; ++l) {
        const auto& R = fwd.residual[static_cast<std::size_t>(l)];
        out[static_cast<std::size_t>(l)].row(static_cast<Eigen::Index>(i)) =
            pool_activations(R.middleRows(batch.begin(s), batch.length(s)), keep);
      }
    }
  }
  return out;
}

/// layers × checkpoints matrix of CKA against the null model.
struct CKASeries {
  std::vector<std::string> layers;
  std::vector<int> epochs;
  MatD values;  // layers × epochs

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "layer";
    for (int e : epochs) os << ",epoch_" << e;
    os << '\n';
    for (std::size_t l = 0; l < layers.size(); ++l) {
      os << layers[l];
      for (Eigen::Index e = 0; e < values.cols(); ++e) os << ',' << values(static_cast<Eigen::Index>(l), e);
      os << '\n';
    }
    return os.str();
  }
};

template <typename T>
CKASeries temporal_cka(const model::TransformerParams<T>& null_model,
                       const std::vector<std::pair<int, model::TransformerParams<T>>>& checkpoints,
                       const std::vector<data::EncodedExample>& probe_set) {
  if (checkpoints.empty()) throw ValidationError("temporal_cka: no checkpoints");
  if (probe_set.size() < 2) throw ValidationError("temporal_cka: probe set needs at least two examples");
  const auto base = pooled_layer_activations(null_model, probe_set);
  CKASeries s;
  const int L = null_model.config.n_layers;
  for (int l = 0; l < L + 2; ++l) s.layers.push_back(layer_label(l, L));
  s.values = MatD(L + 2, static_cast<Eigen::Index>(checkpoints.size()));
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const auto& [epoch, params] = checkpoints[c];
    if (!(params.config == null_model.config)) throw ValidationError("temporal_cka: checkpoint config differs from null model");
    s.epochs.push_back(epoch);
    const auto acts = pooled_layer_activations(params, probe_set);
    for (int l = 0; l < L + 2; ++l) {
      s.values(l, static_cast<Eigen::Index>(c)) = linear_cka(base[static_cast<std::size_t>(l)], acts[static_cast<std::size_t>(l)]);
    }
  }
  return s;
}

}  // namespace srlprobe::repsim

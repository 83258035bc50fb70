#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/data/roles.hpp"
#include "srlprobe/model/transformer.hpp"

namespace srlprobe::neurons {

using data::CollapsedRole;
using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feed-forward activations per example and layer, with the example's role.
struct RoleActivationSet {
  std::vector<CollapsedRole> roles;
  std::vector<MatD> layers;  // each examples × d_ff

  std::size_t size() const noexcept { return roles.size(); }
  int n_layers() const noexcept { return static_cast<int>(layers.size()); }
};

/// Post-GELU hidden units averaged over each example's gold answer span.
/// Examples with role Unknown are dropped.
template <typename T>
RoleActivationSet capture_role_activations(const model::TransformerParams<T>& p,
                                           const std::vector<data::EncodedExample>& xs, int batch_size = 64) {
  std::vector<const data::EncodedExample*> kept;
  for (const auto& x : xs) {
    if (x.role != CollapsedRole::Unknown) kept.push_back(&x);
  }
  if (kept.empty()) throw ValidationError("capture_role_activations: no examples with a known role");
  RoleActivationSet set;
  const int L = p.config.n_layers;
  set.layers.assign(static_cast<std::size_t>(L), MatD(static_cast<Eigen::Index>(kept.size()), p.config.d_ff()));
  model::ForwardOptions opt;
  opt.want_lm = false;
  opt.want_qa = false;
  opt.capture.ff_hidden = true;
  for (std::size_t b0 = 0; b0 < kept.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(kept.size(), b0 + static_cast<std::size_t>(batch_size));
    model::PackedBatch batch;
    for (std::size_t i = b0; i < b1; ++i) batch.add({kept[i]->input_ids.data(), static_cast<std::size_t>(kept[i]->length)});
    auto fwd = model::forward(p, batch, opt);
    for (std::size_t i = b0; i < b1; ++i) {
      const auto& ex = *kept[i];
      const int off = batch.begin(static_cast<int>(i - b0));
      const int len = ex.answer_end - ex.answer_start + 1;
      for (int l = 0; l < L; ++l) {
        set.layers[static_cast<std::size_t>(l)].row(static_cast<Eigen::Index>(i)) =
            fwd.ff_hidden[static_cast<std::size_t>(l)].middleRows(off + ex.answer_start, len).colwise().mean().template cast<double>();
      }
    }
  }
  for (const auto* x : kept) set.roles.push_back(x->role);
  return set;
}

struct SelectionOptions {
  int max_components = 32;
  int per_component = 5;
  int per_layer = 20;
  double p_threshold = 1e-4;
  /// A neuron counts toward a component only if its |loading| is at least
  /// this multiple of 1/sqrt(d_ff), the loading of an evenly spread unit vector.
  double min_loading_ratio = 1.0;
};

struct SelectedNeuron {
  int layer = 0;
  int unit = 0;
  int component = 0;
  double loading = 0.0;  // absolute value
  double f_stat = 0.0;
  double p_value = 1.0;
  CollapsedRole role = CollapsedRole::Unknown;
};

struct Pca {
  Eigen::VectorXd mean;
  Eigen::VectorXd eigenvalues;  // descending
  MatD components;              // d × k, column c is component c
  MatD scores;                  // n × k
};

/// Covariance PCA keeping min(max_components, rank) components. Each
/// component's largest-magnitude entry is made positive.
inline Pca pca(const MatD& X, int max_components) {
  if (X.rows() < 2) throw ValidationError("pca: need at least two rows");
  if (((X.colwise().maxCoeff() - X.colwise().minCoeff()).array() == 0.0).all()) {
    throw UndefinedError("pca: zero-variance activations");
  }
  Pca out;
  out.mean = X.colwise().mean().transpose();
  const MatD Xc = X.rowwise() - out.mean.transpose();
  const MatD cov = (Xc.transpose() * Xc) / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<MatD> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("pca: eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  if (!(top > 0.0)) throw UndefinedError("pca: zero-variance activations");
  const double tol = top * 1e-10 * static_cast<double>(X.cols());
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) rank += ev[i] > tol ? 1 : 0;
  const int k = std::min(max_components, rank);
  out.eigenvalues.resize(k);
  out.components.resize(X.cols(), k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = ev.size() - 1 - c;  // ascending order from the solver
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    out.eigenvalues[c] = ev[src];
    out.components.col(c) = v;
  }
  out.scores = Xc * out.components;
  return out;
}

struct Anova {
  double f = 0.0;
  double p = 1.0;
};

/// One-way ANOVA of `values` grouped by `groups`.
inline Anova one_way_anova(const Eigen::VectorXd& values, const std::vector<int>& groups, int n_groups) {
  std::vector<double> sum(static_cast<std::size_t>(n_groups), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(n_groups), 0);
  const double grand = values.mean();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    sum[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)])] += values[i];
    cnt[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)])] += 1;
  }
  double ssb = 0.0, ssw = 0.0;
  for (int g = 0; g < n_groups; ++g) {
    const double m = sum[static_cast<std::size_t>(g)] / static_cast<double>(cnt[static_cast<std::size_t>(g)]);
    ssb += static_cast<double>(cnt[static_cast<std::size_t>(g)]) * (m - grand) * (m - grand);
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto g = static_cast<std::size_t>(groups[static_cast<std::size_t>(i)]);
    const double d = values[i] - sum[g] / static_cast<double>(cnt[g]);
    ssw += d * d;
  }
  const double df1 = n_groups - 1, df2 = static_cast<double>(values.size()) - n_groups;
  Anova a;
  if (ssw <= 0.0) {
    if (ssb > 0.0) {
      a.f = std::numeric_limits<double>::infinity();
      a.p = 0.0;
    }
    return a;
  }
  a.f = (ssb / df1) / (ssw / df2);
  boost::math::fisher_f dist(df1, df2);
  a.p = boost::math::cdf(boost::math::complement(dist, a.f));
  return a;
}

/// Role whose examples push `column` furthest above its overall mean, in
/// units of the column's standard deviation.
inline CollapsedRole dominant_role(const Eigen::VectorXd& column, const std::vector<CollapsedRole>& roles) {
  const double mean = column.mean();
  const double sd = std::sqrt((column.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(column.size() - 1)));
  std::map<CollapsedRole, std::pair<double, int>> acc;
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    auto& a = acc[roles[static_cast<std::size_t>(i)]];
    a.first += column[i];
    a.second += 1;
  }
  CollapsedRole best = CollapsedRole::Unknown;
  double best_z = -std::numeric_limits<double>::infinity();
  for (const auto& [r, a] : acc) {
    const double z = (a.first / a.second - mean) / (sd > 0 ? sd : 1.0);
    if (z > best_z) {
      best_z = z;
      best = r;
    }
  }
  return best;
}

/// Role-selective units of one layer: PCA, ANOVA of each component's
/// scores across roles, and the highest-|loading| units of every component
/// with p below the threshold.
inline std::vector<SelectedNeuron> select_neurons(const RoleActivationSet& set, int layer,
                                                  const SelectionOptions& opt = {}) {
  if (layer < 0 || layer >= set.n_layers()) throw ValidationError("select_neurons: layer out of range");
  std::map<CollapsedRole, int> counts;
  for (auto r : set.roles) counts[r] += 1;
  if (counts.size() < 2) throw ValidationError("select_neurons: need at least two roles");
  for (const auto& [r, c] : counts) {
    if (c < 3) throw ValidationError("select_neurons: role " + std::string(data::role_name(r)) + " has fewer than 3 examples");
  }
  std::map<CollapsedRole, int> group_of;
  for (const auto& [r, c] : counts) group_of.emplace(r, static_cast<int>(group_of.size()));
  std::vector<int> groups;
  for (auto r : set.roles) groups.push_back(group_of[r]);

  const MatD& X = set.layers[static_cast<std::size_t>(layer)];
  Pca pc;
  try {
    pc = pca(X, opt.max_components);
  } catch (const UndefinedError&) {
    throw UndefinedError("select_neurons: layer " + std::to_string(layer) + " has zero variance");
  }
  const double min_loading = opt.min_loading_ratio / std::sqrt(static_cast<double>(X.cols()));
  std::map<int, SelectedNeuron> chosen;
  for (Eigen::Index c = 0; c < pc.components.cols(); ++c) {
    if (static_cast<int>(chosen.size()) >= opt.per_layer) break;
    const auto a = one_way_anova(pc.scores.col(c), groups, static_cast<int>(group_of.size()));
    if (!(a.p < opt.p_threshold)) continue;
    std::vector<int> idx(static_cast<std::size_t>(X.cols()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto col = pc.components.col(c);
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return std::abs(col[x]) > std::abs(col[y]); });
    for (int k = 0; k < opt.per_component && k < static_cast<int>(idx.size()); ++k) {
      const int j = idx[static_cast<std::size_t>(k)];
      const double load = std::abs(col[j]);
      if (load < min_loading) break;
      auto it = chosen.find(j);
      if (it != chosen.end()) {
        if (load > it->second.loading) it->second = {layer, j, static_cast<int>(c), load, a.f, a.p, it->second.role};
        continue;
      }
      if (static_cast<int>(chosen.size()) >= opt.per_layer) break;
      chosen[j] = {layer, j, static_cast<int>(c), load, a.f, a.p, dominant_role(X.col(j), set.roles)};
    }
  }
  std::vector<SelectedNeuron> out;
  for (auto& [j, n] : chosen) out.push_back(n);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.loading > b.loading; });
  return out;
}

/// Mean activation on role `r` over mean activation on all examples.
inline double selectivity_ratio(const RoleActivationSet& set, int layer, int unit, CollapsedRole r) {
  if (layer < 0 || layer >= set.n_layers()) throw ValidationError("selectivity_ratio: layer out of range");
  const MatD& X = set.layers[static_cast<std::size_t>(layer)];
  if (unit < 0 || unit >= X.cols()) throw ValidationError("selectivity_ratio: unit out of range");
  double role_sum = 0.0;
  int role_n = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.roles[i] == r) {
      role_sum += X(static_cast<Eigen::Index>(i), unit);
      ++role_n;
    }
  }
  if (role_n == 0) throw ValidationError("selectivity_ratio: role absent from the set");
  const double all = X.col(unit).mean();
  if (std::abs(all) < 1e-8) throw UndefinedError("selectivity_ratio: mean activation is zero");
  return (role_sum / role_n) / all;
}

/// First two principal-component scores per example, for scatter plots.
inline MatD pca_projection(const RoleActivationSet& set, int layer, int dims = 2) {
  auto pc = pca(set.layers.at(static_cast<std::size_t>(layer)), dims);
  return pc.scores;
}

}  // namespace srlprobe::neurons

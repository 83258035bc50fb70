#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "srlprobe/core/error.hpp"
#include "srlprobe/neurons/selection.hpp"

namespace srlprobe::neurons {

/// Pearson correlation; nullopt when either vector is constant.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("pearson: need two equal-length vectors");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = (da * da).sum(), sbb = (db * db).sum();
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp((da * db).sum() / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct PairStats {
  std::size_t pairs = 0;
  double mean = 0.0;
  double se = 0.0;  // sd / sqrt(pairs)
};

inline PairStats summarize_pairs(const std::vector<double>& xs) {
  PairStats s;
  s.pairs = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

struct LayerCoactivation {
  int layer = 0;
  PairStats within;
  PairStats across;
  std::size_t skipped = 0;  // pairs with a constant member
  std::size_t total = 0;
  std::optional<double> delta() const {
    if (within.pairs == 0 || across.pairs == 0) return std::nullopt;
    return within.mean - across.mean;
  }
};

/// Mean within-role and across-role correlation of selected units, per layer.
inline std::vector<LayerCoactivation> coactivation(const RoleActivationSet& set,
                                                   const std::vector<SelectedNeuron>& selection) {
  std::map<int, std::vector<const SelectedNeuron*>> by_layer;
  for (const auto& n : selection) by_layer[n.layer].push_back(&n);
  std::vector<LayerCoactivation> out;
  bool any_valid = false;
  for (const auto& [layer, ns] : by_layer) {
    if (layer < 0 || layer >= set.n_layers()) throw ValidationError("coactivation: layer out of range");
    const MatD& X = set.layers[static_cast<std::size_t>(layer)];
    LayerCoactivation lc;
    lc.layer = layer;
    std::vector<double> within, across;
    std::set<CollapsedRole> roles;
    for (std::size_t a = 0; a < ns.size(); ++a) {
      roles.insert(ns[a]->role);
      for (std::size_t b = a + 1; b < ns.size(); ++b) {
        ++lc.total;
        auto r = pearson(X.col(ns[a]->unit), X.col(ns[b]->unit));
        if (!r) {
          ++lc.skipped;
          continue;
        }
        (ns[a]->role == ns[b]->role ? within : across).push_back(*r);
      }
    }
    if (ns.size() >= 2 && roles.size() >= 2) any_valid = true;
    lc.within = summarize_pairs(within);
    lc.across = summarize_pairs(across);
    out.push_back(lc);
  }
  if (!any_valid) throw ValidationError("coactivation: no layer has two selected units with different roles");
  return out;
}

struct PowerLawFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r2 = 0.0;
  double alpha_se = 0.0;
  double beta_se = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // non-positive or missing values

  double predict(double l, double L) const { return alpha * std::pow(l / L, beta); }
};

/// Least squares of log Δρ on log(l/L) for l = 1..L. Entry i of `delta`
/// belongs to l = i + 1.
inline PowerLawFit powerlaw_fit(const std::vector<std::optional<double>>& delta) {
  const double L = static_cast<double>(delta.size());
  std::vector<double> xs, ys;
  PowerLawFit f;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!delta[i] || !(*delta[i] > 0.0)) {
      ++f.excluded;
      continue;
    }
    xs.push_back(std::log(static_cast<double>(i + 1) / L));
    ys.push_back(std::log(*delta[i]));
  }
  f.used = xs.size();
  if (xs.size() < 3) throw ValidationError("powerlaw_fit: fewer than three positive points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  f.beta = sxy / sxx;
  const double log_alpha = my - f.beta * mx;
  f.alpha = std::exp(log_alpha);
  double ssr = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (log_alpha + f.beta * xs[i]);
    ssr += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - ssr / syy : 1.0;
  const double s2 = ssr / (n - 2);
  f.beta_se = std::sqrt(s2 / sxx);
  f.alpha_se = f.alpha * std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  return f;
}

}  // namespace srlprobe::neurons

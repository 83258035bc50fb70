#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"

namespace srlprobe::emergence {

inline constexpr double kDegenerateDenominator = 1e-9;

/// Share of above-chance performance already present before fine-tuning.
inline double emergence_score(double f1_frozen, double f1_random, double f1_full) {
  const double denom = f1_full - f1_random;
  if (std::abs(denom) <= kDegenerateDenominator) {
    throw UndefinedError("emergence score undefined: full and random F1 coincide");
  }
  return (f1_frozen - f1_random) / denom;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t n = 0;
};

inline MeanStd aggregate_seeds(const std::vector<double>& xs) {
  if (xs.size() < 2) throw ValidationError("aggregate_seeds: need at least two values");
  MeanStd r;
  r.n = xs.size();
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return r;
}

/// "mean±std" with the given number of decimals.
inline std::string format_mean_std(const MeanStd& m, int decimals = 1, double scale = 1.0) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << m.mean * scale << "±" << m.std * scale;
  return os.str();
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
};

/// Welch's unequal-variance t-test from summary statistics.
inline WelchResult welch_from_summary(double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b,
                                      std::size_t n_b) {
  if (n_a < 2 || n_b < 2) throw ValidationError("welch_t_test: each sample needs at least two values");
  const double va = sd_a * sd_a / static_cast<double>(n_a);
  const double vb = sd_b * sd_b / static_cast<double>(n_b);
  const double diff = mean_a - mean_b;
  WelchResult r;
  if (va + vb == 0.0) {
    if (diff == 0.0) throw UndefinedError("welch_t_test: both samples constant and equal");
    r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.df = static_cast<double>(n_a + n_b - 2);
    r.p = 0.0;
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(n_a - 1) + vb * vb / static_cast<double>(n_b - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

inline WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("welch_t_test: each sample needs at least two values");
  auto ma = aggregate_seeds(a), mb = aggregate_seeds(b);
  return welch_from_summary(ma.mean, ma.std, ma.n, mb.mean, mb.std, mb.n);
}

/// Regime F1 values of one seed, as fractions.
struct SeedF1 {
  std::uint64_t seed = 0;
  double full = 0.0;
  double frozen = 0.0;
  double random = 0.0;
  double delta_pre() const noexcept { return frozen - random; }
  double delta_ft() const noexcept { return full - frozen; }
};

struct EmergenceReport {
  std::vector<SeedF1> seeds;
  std::vector<std::optional<double>> e_per_seed;  // absent when degenerate
  std::map<std::string, MeanStd> summary;         // full, frozen, random, delta_pre, delta_ft, E

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& s = seeds[i];
      nlohmann::ordered_json row = {{"seed", s.seed},           {"f1_full", s.full},
                                    {"f1_frozen", s.frozen},    {"f1_random", s.random},
                                    {"delta_pre", s.delta_pre()}, {"delta_ft", s.delta_ft()},
                                    {"delta_emergence", s.full - s.frozen}};
      row["E"] = e_per_seed[i] ? nlohmann::ordered_json(*e_per_seed[i]) : nlohmann::ordered_json(nullptr);
      rows.push_back(row);
    }
    j["per_seed"] = rows;
    nlohmann::ordered_json sum = nlohmann::ordered_json::object();
    for (const char* key : {"random", "frozen", "full", "delta_pre", "delta_ft", "E"}) {
      auto it = summary.find(key);
      if (it == summary.end()) continue;
      sum[key] = {{"mean", it->second.mean}, {"std", it->second.std}, {"n", it->second.n}};
    }
    j["summary"] = sum;
    return j;
  }
};

/// Per-seed decomposition and E, then mean±std of each quantity.
inline EmergenceReport build_report(const std::vector<SeedF1>& seeds) {
  if (seeds.empty()) throw ValidationError("emergence: no seeds");
  EmergenceReport r;
  r.seeds = seeds;
  std::map<std::string, std::vector<double>> cols;
  for (const auto& s : seeds) {
    cols["full"].push_back(s.full);
    cols["frozen"].push_back(s.frozen);
    cols["random"].push_back(s.random);
    cols["delta_pre"].push_back(s.delta_pre());
    cols["delta_ft"].push_back(s.delta_ft());
    try {
      const double e = emergence_score(s.frozen, s.random, s.full);
      r.e_per_seed.push_back(e);
      cols["E"].push_back(e);
    } catch (const UndefinedError&) {
      r.e_per_seed.push_back(std::nullopt);
    }
  }
  for (const auto& [k, v] : cols) {
    if (v.size() >= 2) {
      r.summary[k] = aggregate_seeds(v);
    } else if (v.size() == 1) {
      r.summary[k] = MeanStd{v[0], 0.0, 1};
    }
  }
  return r;
}

}  // namespace srlprobe::emergence

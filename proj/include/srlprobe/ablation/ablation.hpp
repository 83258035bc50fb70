#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/eval/span.hpp"
#include "srlprobe/model/ablation_mask.hpp"
#include "srlprobe/train/finetune.hpp"

namespace srlprobe::ablation {

using data::CollapsedRole;
using model::AblationMask;
using model::Sublayer;
using train::Params;
using ojson = nlohmann::ordered_json;

enum class AblationMode { Retrain, NoRetrain };

inline std::string mode_name(AblationMode m) { return m == AblationMode::Retrain ? "retrain" : "no-retrain"; }

inline AblationMode parse_mode(std::string_view s) {
  if (s == "retrain") return AblationMode::Retrain;
  if (s == "no-retrain") return AblationMode::NoRetrain;
  throw ValidationError("unknown ablation mode '" + std::string(s) + "' (valid: retrain, no-retrain)");
}

struct SeedDelta {
  std::uint64_t seed = 0;
  eval::F1Report baseline;
  eval::F1Report ablated;

  double delta() const { return ablated.f1 - baseline.f1; }
  /// Signed change on role `r`; nullopt when the role is absent.
  std::optional<double> role_delta(CollapsedRole r) const {
    auto a = ablated.role_f1(r), b = baseline.role_f1(r);
    if (!a || !b) return std::nullopt;
    return *a - *b;
  }
};

struct AblationRun {
  AblationMode mode = AblationMode::NoRetrain;
  AblationMask mask;
  std::vector<SeedDelta> seeds;

  double mean_delta() const {
    if (seeds.empty()) throw ValidationError("ablation run has no seeds");
    double s = 0.0;
    for (const auto& d : seeds) s += d.delta();
    return s / static_cast<double>(seeds.size());
  }

  std::optional<double> mean_role_delta(CollapsedRole r) const {
    double s = 0.0;
    int n = 0;
    for (const auto& d : seeds) {
      if (auto v = d.role_delta(r)) {
        s += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return s / n;
  }

  ojson to_json() const {
    ojson j;
    j["mode"] = mode_name(mode);
    j["mask"] = model::format_mask(mask);
    j["mask_size"] = mask.size();
    ojson ss = ojson::array();
    for (const auto& d : seeds) {
      ojson e;
      e["seed"] = d.seed;
      e["delta_f1"] = d.delta();
      ojson roles = ojson::object();
      for (const auto& [r, s] : d.baseline.per_role) {
        if (auto v = d.role_delta(r)) {
          roles[std::string(data::role_name(r))] = {{"baseline_f1", s.f1}, {"ablated_f1", *d.ablated.role_f1(r)}, {"delta", *v}};
        }
      }
      e["per_role"] = roles;
      e["baseline"] = d.baseline.to_json();
      e["ablated"] = d.ablated.to_json();
      ss.push_back(e);
    }
    j["seeds"] = ss;
    if (!seeds.empty()) j["mean_delta_f1"] = mean_delta();
    return j;
  }
};

/// Zeroes `mask` in each already-probed model and re-evaluates without
/// training.
inline AblationRun ablate_noretrain(const std::vector<std::pair<std::uint64_t, Params>>& probes, const AblationMask& mask,
                                    const std::vector<data::EncodedExample>& eval_set,
                                    int max_answer_len = eval::kDefaultMaxAnswerLen) {
  if (probes.empty()) throw ValidationError("ablate_noretrain: no probe checkpoints");
  AblationRun run;
  run.mode = AblationMode::NoRetrain;
  run.mask = mask;
  for (const auto& [seed, p] : probes) {
    mask.validate(p.config);
    SeedDelta d;
    d.seed = seed;
    d.baseline = eval::evaluate(p, eval_set, true, max_answer_len);
    d.ablated = mask.empty() ? d.baseline : eval::evaluate(model::apply_ablation(p, mask), eval_set, true, max_answer_len);
    run.seeds.push_back(std::move(d));
  }
  return run;
}

/// Zeroes `mask` in the pre-trained backbone, fully fine-tunes with the mask
/// held, and compares against the same seed's unablated baseline.
inline AblationRun ablate_retrain(const Params& pretrained, const AblationMask& mask,
                                  const std::vector<data::EncodedExample>& train_set,
                                  const std::vector<data::EncodedExample>& val_set,
                                  const std::vector<data::EncodedExample>& eval_set, const train::FinetuneHyper& hyper,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::map<std::uint64_t, eval::F1Report>& baselines) {
  if (seeds.empty()) throw ValidationError("ablate_retrain: no seeds");
  mask.validate(pretrained.config);
  for (auto s : seeds) {
    if (!baselines.count(s)) throw MissingArtifactError("ablate_retrain: no baseline for seed " + std::to_string(s));
  }
  AblationRun run;
  run.mode = AblationMode::Retrain;
  run.mask = mask;
  const train::RegimeSpec full{train::Regime::Full, -1};
  for (auto s : seeds) {
    auto r = train::finetune(pretrained, train::BackboneSource::Pretrained, full, train_set, val_set, hyper, s, &mask);
    SeedDelta d;
    d.seed = s;
    d.baseline = baselines.at(s);
    d.ablated = eval::evaluate(r.best, eval_set, true, hyper.max_answer_len);
    run.seeds.push_back(std::move(d));
  }
  return run;
}

/// Same number of units per layer as `target`, drawn uniformly from the
/// layer's other units.
inline AblationMask random_control_mask(const AblationMask& target, int d_ff, std::uint64_t seed) {
  if (target.neurons.empty()) throw ValidationError("random_control_mask: empty selection");
  std::map<int, std::vector<int>> by_layer;
  for (auto [l, j] : target.neurons) by_layer[l].push_back(j);
  AblationMask out;
  std::mt19937_64 rng(train::mix_seed(seed, 0xC0471));
  for (const auto& [l, units] : by_layer) {
    std::vector<int> pool;
    for (int j = 0; j < d_ff; ++j) {
      if (!target.neurons.count({l, j})) pool.push_back(j);
    }
    if (pool.size() < units.size()) {
      throw ValidationError("random_control_mask: layer " + std::to_string(l) + " has only " +
                            std::to_string(pool.size()) + " non-selected units");
    }
    for (std::size_t k = 0; k < units.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      out.neurons.insert({l, pool[k]});
    }
  }
  return out;
}

/// Fractional number of components, taken in descending |Δ| order, whose
/// cumulative |Δ| reaches `fraction` of the total; the last component counts
/// in proportion to the share it contributes.
inline double components_for_fraction(std::vector<double> abs_deltas, double fraction = 0.8) {
  for (auto& v : abs_deltas) v = std::abs(v);
  std::stable_sort(abs_deltas.begin(), abs_deltas.end(), std::greater<>());
  double total = 0.0;
  for (double v : abs_deltas) total += v;
  if (!(total > 0.0)) throw UndefinedError("components_for_fraction: total |delta| is zero");
  const double goal = fraction * total;
  double cum = 0.0;
  for (std::size_t k = 0; k < abs_deltas.size(); ++k) {
    if (cum + abs_deltas[k] >= goal) return static_cast<double>(k) + (goal - cum) / abs_deltas[k];
    cum += abs_deltas[k];
  }
  return static_cast<double>(abs_deltas.size());
}

inline double concentration_ratio(double components_for_80, int total_components) {
  if (total_components <= 0) throw ValidationError("concentration_ratio: no components");
  return components_for_80 / total_components;
}

struct ComponentEffect {
  int layer = 0;
  Sublayer sublayer = Sublayer::Attention;
  std::vector<double> deltas;  // signed, one per seed
  double mean_delta = 0.0;
};

struct CircuitReport {
  CollapsedRole role = CollapsedRole::Unknown;
  std::vector<ComponentEffect> ranking;  // descending mean |Δ|
  std::vector<double> k_per_seed;
  double components_for_80 = 0.0;
  int total_components = 0;
  double ratio = 0.0;

  std::string to_csv() const {
    std::ostringstream out;
    out << "rank,layer,sublayer,mean_delta,abs_mean_delta\n";
    char buf[96];
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      const auto& c = ranking[i];
      std::snprintf(buf, sizeof buf, "%.10g,%.10g", c.mean_delta, std::abs(c.mean_delta));
      out << i + 1 << ',' << c.layer << ',' << model::sublayer_name(c.sublayer) << ',' << buf << '\n';
    }
    return out.str();
  }

  ojson to_json() const {
    ojson j;
    j["role"] = std::string(data::role_name(role));
    j["components_for_80"] = components_for_80;
    j["total_components"] = total_components;
    j["concentration_ratio"] = ratio;
    j["k_per_seed"] = k_per_seed;
    return j;
  }
};

/// Zero-ablates each attention and MLP sublayer alone in every model and
/// records the change in F1 on role `r`.
inline CircuitReport circuit_analysis(const std::vector<std::pair<std::uint64_t, Params>>& models,
                                      const std::vector<data::EncodedExample>& eval_set, CollapsedRole r,
                                      int max_answer_len = eval::kDefaultMaxAnswerLen) {
  if (models.empty()) throw ValidationError("circuit_analysis: no models");
  const auto subset = eval::role_subset(eval_set, r);
  if (subset.empty()) throw ValidationError("circuit_analysis: role " + std::string(data::role_name(r)) + " absent");
  const int L = models.front().second.config.n_layers;
  CircuitReport rep;
  rep.role = r;
  rep.total_components = 2 * L;
  std::vector<ComponentEffect> effects;
  for (int l = 0; l < L; ++l) {
    for (auto s : {Sublayer::Attention, Sublayer::Mlp}) effects.push_back({l, s, {}, 0.0});
  }
  for (const auto& [seed, p] : models) {
    if (p.config.n_layers != L) throw ValidationError("circuit_analysis: models differ in depth");
    const double base = eval::evaluate(p, subset, false, max_answer_len).f1;
    std::vector<double> abs_d;
    for (auto& e : effects) {
      AblationMask m;
      m.components.insert({e.layer, e.sublayer});
      const double d = eval::evaluate(model::apply_ablation(p, m), subset, false, max_answer_len).f1 - base;
      e.deltas.push_back(d);
      abs_d.push_back(std::abs(d));
    }
    rep.k_per_seed.push_back(components_for_fraction(abs_d));
  }
  for (auto& e : effects) {
    double s = 0.0;
    for (double d : e.deltas) s += d;
    e.mean_delta = s / static_cast<double>(e.deltas.size());
  }
  rep.ranking = effects;
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [](const auto& a, const auto& b) { return std::abs(a.mean_delta) > std::abs(b.mean_delta); });
  double ks = 0.0;
  for (double k : rep.k_per_seed) ks += k;
  rep.components_for_80 = ks / static_cast<double>(rep.k_per_seed.size());
  rep.ratio = concentration_ratio(rep.components_for_80, rep.total_components);
  return rep;
}

}  // namespace srlprobe::ablation

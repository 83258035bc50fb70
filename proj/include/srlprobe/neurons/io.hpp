#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/model/ablation_mask.hpp"
#include "srlprobe/neurons/coactivation.hpp"

namespace srlprobe::neurons {

using ojson = nlohmann::ordered_json;

/// Selected units together with their activation columns, so later analyses
/// need neither the checkpoint nor the dataset.
struct SelectionFile {
  std::vector<CollapsedRole> roles;
  std::vector<SelectedNeuron> neurons;
  std::vector<Eigen::VectorXd> activations;  // parallel to neurons
};

inline SelectionFile make_selection_file(const RoleActivationSet& set, const std::vector<SelectedNeuron>& sel) {
  SelectionFile f;
  f.roles = set.roles;
  f.neurons = sel;
  for (const auto& n : sel) f.activations.push_back(set.layers.at(static_cast<std::size_t>(n.layer)).col(n.unit));
  return f;
}

inline ojson to_json(const SelectionFile& f) {
  ojson j;
  ojson roles = ojson::array();
  for (auto r : f.roles) roles.push_back(std::string(data::role_name(r)));
  j["roles"] = roles;
  ojson ns = ojson::array();
  for (std::size_t i = 0; i < f.neurons.size(); ++i) {
    const auto& n = f.neurons[i];
    ojson e;
    e["layer"] = n.layer;
    e["unit"] = n.unit;
    e["role"] = std::string(data::role_name(n.role));
    e["component"] = n.component;
    e["loading"] = n.loading;
    e["f_stat"] = n.f_stat;
    e["p"] = n.p_value;
    e["activations"] = std::vector<double>(f.activations[i].data(), f.activations[i].data() + f.activations[i].size());
    ns.push_back(e);
  }
  j["neurons"] = ns;
  return j;
}

inline CollapsedRole role_from_json(const ojson& v) {
  auto r = data::parse_role(v.get<std::string>());
  if (!r) throw ValidationError("unknown role '" + v.get<std::string>() + "'");
  return *r;
}

inline SelectionFile selection_from_json(const ojson& j) {
  SelectionFile f;
  try {
    for (const auto& r : j.at("roles")) f.roles.push_back(role_from_json(r));
    for (const auto& e : j.at("neurons")) {
      SelectedNeuron n;
      n.layer = e.at("layer").get<int>();
      n.unit = e.at("unit").get<int>();
      n.role = role_from_json(e.at("role"));
      n.component = e.value("component", 0);
      n.loading = e.value("loading", 0.0);
      n.f_stat = e.value("f_stat", 0.0);
      n.p_value = e.value("p", 1.0);
      auto a = e.at("activations").get<std::vector<double>>();
      if (a.size() != f.roles.size()) throw ValidationError("selection: activation length differs from role count");
      f.neurons.push_back(n);
      f.activations.push_back(Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("selection file: ") + e.what());
  }
  return f;
}

inline model::AblationMask selection_mask(const std::vector<SelectedNeuron>& sel) {
  model::AblationMask m;
  for (const auto& n : sel) m.neurons.insert({n.layer, n.unit});
  return m;
}

/// Co-activation from a selection file alone.
inline std::vector<LayerCoactivation> coactivation(const SelectionFile& f) {
  int max_layer = -1;
  for (const auto& n : f.neurons) max_layer = std::max(max_layer, n.layer);
  RoleActivationSet set;
  set.roles = f.roles;
  std::vector<int> width(static_cast<std::size_t>(max_layer + 1), 0);
  std::vector<SelectedNeuron> remapped = f.neurons;
  for (auto& n : remapped) n.unit = width[static_cast<std::size_t>(n.layer)]++;
  for (int l = 0; l <= max_layer; ++l) {
    set.layers.emplace_back(static_cast<Eigen::Index>(f.roles.size()), width[static_cast<std::size_t>(l)]);
  }
  for (std::size_t i = 0; i < remapped.size(); ++i) {
    set.layers[static_cast<std::size_t>(remapped[i].layer)].col(remapped[i].unit) = f.activations[i];
  }
  auto rep = coactivation(set, remapped);
  return rep;
}

inline std::string coactivation_csv(const std::vector<LayerCoactivation>& rep) {
  std::ostringstream out;
  out << "layer,rho_within,se_within,pairs_within,rho_across,se_across,pairs_across,delta_rho,skipped,total\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& l : rep) {
    out << l.layer << ',';
    if (l.within.pairs) out << num(l.within.mean) << ',' << num(l.within.se);
    else out << ',';
    out << ',' << l.within.pairs << ',';
    if (l.across.pairs) out << num(l.across.mean) << ',' << num(l.across.se);
    else out << ',';
    out << ',' << l.across.pairs << ',';
    if (auto d = l.delta()) out << num(*d);
    out << ',' << l.skipped << ',' << l.total << '\n';
  }
  return out.str();
}

/// Δρ indexed by depth 1..L; layers without both partitions stay empty.
inline std::vector<std::optional<double>> delta_by_depth(const std::vector<LayerCoactivation>& rep, int n_layers) {
  std::vector<std::optional<double>> d(static_cast<std::size_t>(n_layers));
  for (const auto& l : rep) {
    if (l.layer >= 0 && l.layer < n_layers) d[static_cast<std::size_t>(l.layer)] = l.delta();
  }
  return d;
}

inline ojson to_json(const PowerLawFit& f) {
  return ojson{{"alpha", f.alpha}, {"beta", f.beta},   {"r2", f.r2},        {"alpha_se", f.alpha_se},
               {"beta_se", f.beta_se}, {"used", f.used}, {"excluded", f.excluded}};
}

}  // namespace srlprobe::neurons

#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/params.hpp"

namespace srlprobe::model {

enum class Sublayer { Attention, Mlp };

inline std::string_view sublayer_name(Sublayer s) { return s == Sublayer::Attention ? "attention" : "mlp"; }

/// Units and whole sublayers to zero. A masked feed-forward unit loses its
/// input row, bias and output column, so its post-GELU activation is exactly
/// zero; a masked sublayer loses its output projection and bias, so it adds
/// exactly nothing to the residual stream.
struct AblationMask {
  std::set<std::pair<int, int>> neurons;          // (layer, ff unit)
  std::set<std::pair<int, Sublayer>> components;  // (layer, sublayer)

  bool empty() const noexcept { return neurons.empty() && components.empty(); }
  std::size_t size() const noexcept { return neurons.size() + components.size(); }

  void validate(const ModelConfig& c) const {
    for (auto [l, j] : neurons) {
      if (l < 0 || l >= c.n_layers || j < 0 || j >= c.d_ff()) {
        throw ValidationError("ablation mask: unit (" + std::to_string(l) + ", " + std::to_string(j) +
                              ") out of range");
      }
    }
    for (const auto& [l, s] : components) {
      if (l < 0 || l >= c.n_layers) {
        throw ValidationError("ablation mask: component layer " + std::to_string(l) + " out of range");
      }
    }
  }

  friend bool operator==(const AblationMask&, const AblationMask&) = default;
};

/// Zeroes masked entries in place.
template <typename T>
void apply_ablation_inplace(TransformerParams<T>& p, const AblationMask& mask) {
  mask.validate(p.config);
  for (auto [l, j] : mask.neurons) {
    auto& L = p.layers[static_cast<std::size_t>(l)];
    L.w1.row(j).setZero();
    L.b1[j] = T(0);
    L.w2.col(j).setZero();
  }
  for (const auto& [l, s] : mask.components) {
    auto& L = p.layers[static_cast<std::size_t>(l)];
    if (s == Sublayer::Attention) {
      L.wo.setZero();
      L.bo.setZero();
    } else {
      L.w2.setZero();
      L.b2.setZero();
    }
  }
}

template <typename T>
TransformerParams<T> apply_ablation(TransformerParams<T> p, const AblationMask& mask) {
  apply_ablation_inplace(p, mask);
  return p;
}

/// True when every masked entry is exactly 0.0.
template <typename T>
bool mask_holds(const TransformerParams<T>& p, const AblationMask& mask) {
  for (auto [l, j] : mask.neurons) {
    const auto& L = p.layers[static_cast<std::size_t>(l)];
    if ((L.w1.row(j).array() != T(0)).any() || L.b1[j] != T(0) || (L.w2.col(j).array() != T(0)).any()) {
      return false;
    }
  }
  for (const auto& [l, s] : mask.components) {
    const auto& L = p.layers[static_cast<std::size_t>(l)];
    if (s == Sublayer::Attention) {
      if (!L.wo.isZero(0) || !L.bo.isZero(0)) return false;
    } else if (!L.w2.isZero(0) || !L.b2.isZero(0)) {
      return false;
    }
  }
  return true;
}

/// Mask files hold one entry per line, `(layer, unit)` or `(layer, sublayer)`;
/// parentheses and commas are optional and `#` starts a comment.
inline AblationMask parse_mask(std::istream& in) {
  AblationMask m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    for (auto& ch : line) {
      if (ch == '(' || ch == ')' || ch == ',') ch = ' ';
    }
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b)) throw ValidationError("mask line " + std::to_string(lineno) + ": expected two fields");
    int layer = 0;
    try {
      layer = std::stoi(a);
    } catch (const std::exception&) {
      throw ValidationError("mask line " + std::to_string(lineno) + ": bad layer '" + a + "'");
    }
    if (b == "attention" || b == "attn") {
      m.components.insert({layer, Sublayer::Attention});
    } else if (b == "mlp") {
      m.components.insert({layer, Sublayer::Mlp});
    } else {
      try {
        m.neurons.insert({layer, std::stoi(b)});
      } catch (const std::exception&) {
        throw ValidationError("mask line " + std::to_string(lineno) + ": bad unit '" + b + "'");
      }
    }
  }
  return m;
}

inline AblationMask load_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mask file " + path);
  return parse_mask(in);
}

inline std::string format_mask(const AblationMask& m) {
  std::ostringstream out;
  for (auto [l, j] : m.neurons) out << '(' << l << ", " << j << ")\n";
  for (const auto& [l, s] : m.components) out << '(' << l << ", " << sublayer_name(s) << ")\n";
  return out.str();
}

inline void save_mask(const AblationMask& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write mask file " + path);
  out << format_mask(m);
}

}  // namespace srlprobe::model

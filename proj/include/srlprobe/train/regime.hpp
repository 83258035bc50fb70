#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/transformer.hpp"

namespace srlprobe::train {

enum class Regime { Full, FrozenProbe, RandomBaseline, SepOnly };
enum class BackboneSource { Pretrained, RandomInit };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Full: return "full";
    case Regime::FrozenProbe: return "frozen";
    case Regime::RandomBaseline: return "random";
    case Regime::SepOnly: return "sep-only";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : {Regime::Full, Regime::FrozenProbe, Regime::RandomBaseline, Regime::SepOnly}) {
    if (regime_name(r) == s) return r;
  }
  throw ValidationError("unknown regime '" + std::string(s) + "' (valid: full, frozen, random, sep-only)");
}

/// Entries an optimizer step may change.
struct TrainableSet {
  bool all = false;
  bool tok_emb = false;
  std::optional<int> tok_emb_row;  // when set, only this row of tok_emb
  bool qa_head = false;

  bool contains(const std::string& tensor) const {
    if (all) return true;
    if (tensor == "tok_emb") return tok_emb;
    if (tensor == "qa.w_start" || tensor == "qa.w_end") return qa_head;
    return false;
  }
};

struct RegimeSpec {
  Regime regime = Regime::Full;
  int sep_id = -1;  // SepOnly only

  BackboneSource backbone() const noexcept {
    return regime == Regime::RandomBaseline ? BackboneSource::RandomInit : BackboneSource::Pretrained;
  }

  TrainableSet trainable() const {
    TrainableSet t;
    switch (regime) {
      case Regime::Full:
        t.all = true;
        break;
      case Regime::FrozenProbe:
      case Regime::RandomBaseline:
        t.tok_emb = true;
        t.qa_head = true;
        break;
      case Regime::SepOnly:
        if (sep_id < 0) throw ValidationError("sep-only regime needs a separator id");
        t.tok_emb = true;
        t.tok_emb_row = sep_id;
        t.qa_head = true;
        break;
    }
    return t;
  }

  /// Gradient groups the backward pass must fill.
  model::GradGroups grad_groups() const {
    model::GradGroups g;
    if (regime != Regime::Full) {
      g.pos_emb = false;
      g.blocks = false;
      g.final_norm = false;
    }
    return g;
  }
};

}  // namespace srlprobe::train

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "srlprobe/core/error.hpp"

namespace srlprobe::model {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 128;
  int n_heads = 2;
  int ff_mult = 4;
  int vocab = 30522;
  int max_seq = 512;
  float dropout = 0.0f;
  bool tie_embeddings = true;

  int d_ff() const noexcept { return ff_mult * d_model; }
  int head_dim() const noexcept { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 0) throw ValidationError("config: n_layers must be >= 0");
    if (d_model <= 0 || n_heads <= 0) throw ValidationError("config: d_model and n_heads must be positive");
    if (d_model % n_heads != 0) throw ValidationError("config: d_model must be divisible by n_heads");
    if (ff_mult != 4) throw ValidationError("config: ff_mult is fixed at 4");
    if (vocab <= 0) throw ValidationError("config: vocab must be positive");
    if (max_seq < 1) throw ValidationError("config: max_seq must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ValidationError("config: dropout must be in [0, 1)");
    if (!tie_embeddings) throw ValidationError("config: untied LM head is not supported");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamCount {
  std::int64_t transformer = 0;  // blocks + final LN, no embeddings, no QA head
  std::int64_t total = 0;        // transformer + token and positional embeddings
  std::int64_t qa_head = 0;      // added at fine-tune time
};

/// Closed-form parameter accounting: each block carries 4 d×d attention
/// projections and the d×4d / 4d×d feed-forward pair, all with biases, plus
/// two affine layer norms, giving 12d² + 13d per block.
inline ParamCount count_params(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  const std::int64_t per_block = 12 * d * d + 13 * d;
  ParamCount p;
  p.transformer = c.n_layers * per_block + 2 * d;
  p.total = p.transformer + static_cast<std::int64_t>(c.vocab) * d + static_cast<std::int64_t>(c.max_seq) * d;
  p.qa_head = 2 * d;
  return p;
}

/// Architecture, pre-training and fine-tuning defaults for one named scale.
struct ScalePreset {
  std::string name;
  ModelConfig model;
  // pre-training
  int pretrain_batch = 64;
  double pretrain_lr = 5e-4;
  int warmup_steps = 500;
  int pretrain_max_epochs = 200;
  int pretrain_patience = 20;
  std::int64_t samples_per_epoch = 200000;
  // fine-tuning
  int finetune_batch = 64;
  double full_lr = 4e-5;
  double probe_lr = 1e-3;
  int finetune_max_epochs = 30;
  int finetune_patience = 8;
};

inline std::vector<ScalePreset> scale_presets() {
  auto mk = [](std::string name, int L, int d, int h, float drop, int pb, double plr, int warm,
               std::int64_t spe, int fb, double flr) {
    ScalePreset p;
    p.name = std::move(name);
    p.model = ModelConfig{L, d, h, 4, 30522, 512, drop, true};
    p.pretrain_batch = pb;
    p.pretrain_lr = plr;
    p.warmup_steps = warm;
    p.samples_per_epoch = spe;
    p.finetune_batch = fb;
    p.full_lr = flr;
    return p;
  };
  return {
      mk("tiny", 2, 128, 2, 0.05f, 64, 5e-4, 500, 200000, 64, 4e-5),
      mk("small", 4, 256, 4, 0.1f, 48, 2e-4, 500, 400000, 48, 2e-5),
      mk("base", 6, 512, 8, 0.1f, 32, 2e-4, 1000, 800000, 32, 1e-5),
      mk("medium", 8, 768, 12, 0.1f, 96, 1e-4, 2000, 1500000, 32, 1e-5),
  };
}

inline ScalePreset find_preset(std::string_view name) {
  std::string valid;
  for (const auto& p : scale_presets()) {
    if (p.name == name) return p;
    valid += (valid.empty() ? "" : ", ") + p.name;
  }
  throw ValidationError("unknown scale preset '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace srlprobe::model

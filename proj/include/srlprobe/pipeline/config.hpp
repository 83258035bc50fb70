#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/ablation/ablation.hpp"
#include "srlprobe/core/error.hpp"
#include "srlprobe/model/config.hpp"
#include "srlprobe/repsim/probe.hpp"
#include "srlprobe/train/finetune.hpp"
#include "srlprobe/train/pretrain.hpp"
#include "srlprobe/train/regime.hpp"

namespace srlprobe::pipeline {

using ojson = nlohmann::ordered_json;

struct DataSection {
  std::string source = "synth";  // synth | files
  std::uint64_t synth_seed = 7;
  std::size_t n_qa = 2000;
  std::size_t n_docs = 50000;
  double two_clause_fraction = 1.0;
  double qa_discourse_fraction = 0.5;
  bool question_first = true;
  int qa_max_seq = 48;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::string vocab;   // files: one token per line
  std::string corpus;  // files: one document per line
  std::string qa;      // files: raw QA records
};

struct ModelSection {
  int n_layers = 2;
  int d_model = 128;
  int n_heads = 2;
  int max_seq = 512;
  float dropout = 0.0f;
};

struct PretrainSection {
  train::PretrainHyper hyper;
  int keep_every = 5;
};

struct FinetuneSection {
  double full_lr = 4e-5;
  double probe_lr = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 8;
  int keep_every = 1;

  train::FinetuneHyper hyper(train::Regime r) const {
    train::FinetuneHyper h;
    h.lr = r == train::Regime::Full ? full_lr : probe_lr;
    h.batch_size = batch_size;
    h.max_epochs = max_epochs;
    h.patience = patience;
    return h;
  }
};

struct AnalysisToggles {
  bool emergence = true;
  bool cka = true;
  bool probe = true;
  bool neurons = true;
  bool ablate = true;
  bool circuit = true;
  bool retrain_ablation = false;
  bool report = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string scale = "tiny";
  bool desk = false;
  std::string store = "runs";
  std::vector<std::uint64_t> seeds = {42, 1042, 2042, 3042, 4042};
  std::vector<std::string> regimes = {"random", "frozen", "full"};
  int jobs = 1;
  DataSection data;
  ModelSection model;
  PretrainSection pretrain;
  FinetuneSection finetune;
  AnalysisToggles analyses;
  std::size_t cka_examples = 500;
  repsim::ProbeHyper probe;
  std::string neuron_model = "frozen";
  std::string ablation_role = "ARG0-Agent";

  /// Architecture and optimisation defaults of a named scale. `desk`
  /// shrinks the run to a single-CPU budget on the synthetic corpus.
  static ExperimentConfig from_preset(const std::string& scale, bool desk) {
    const auto p = model::find_preset(scale);
    ExperimentConfig c;
    c.scale = scale;
    c.desk = desk;
    c.model = {p.model.n_layers, p.model.d_model, p.model.n_heads, p.model.max_seq, p.model.dropout};
    auto& ph = c.pretrain.hyper;
    ph.lr = p.pretrain_lr;
    ph.batch_size = p.pretrain_batch;
    ph.warmup_steps = p.warmup_steps;
    ph.samples_per_epoch = p.samples_per_epoch;
    ph.max_epochs = p.pretrain_max_epochs;
    ph.patience = p.pretrain_patience;
    c.finetune.full_lr = p.full_lr;
    c.finetune.probe_lr = p.probe_lr;
    c.finetune.batch_size = p.finetune_batch;
    c.finetune.max_epochs = p.finetune_max_epochs;
    c.finetune.patience = p.finetune_patience;
    if (desk) {
      c.name = "desk";
      c.seeds = {42, 1042, 2042};
      c.model.d_model = std::min(c.model.d_model, 64);
      c.model.max_seq = 64;
      c.model.dropout = 0.0f;
      ph.lr = 2e-3;
      ph.batch_size = 32;
      ph.warmup_steps = 200;
      ph.samples_per_epoch = 0;
      ph.max_epochs = 3;
      ph.window = 64;
      ph.val_fraction = 0.05;
      c.pretrain.keep_every = 1;
      c.finetune.full_lr = 1e-3;
      c.finetune.probe_lr = 1e-2;
      c.finetune.batch_size = 32;
      c.probe.lr = 1e-2;
      c.probe.max_epochs = 40;
    }
    return c;
  }

  model::ModelConfig model_config(int vocab) const {
    return {model.n_layers, model.d_model, model.n_heads, 4, vocab, model.max_seq, model.dropout, true};
  }

  /// Every problem at once, one per line; empty when valid.
  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    try {
      model::find_preset(scale);
    } catch (const ValidationError& e) {
      out.push_back(e.what());
    }
    if (store.empty()) out.push_back("store: path is empty");
    if (seeds.empty()) out.push_back("seeds: at least one seed required");
    if (jobs < 1) out.push_back("jobs: must be >= 1");
    if (regimes.empty()) out.push_back("regimes: at least one regime required");
    for (const auto& r : regimes) {
      try {
        auto reg = train::parse_regime(r);
        if (reg == train::Regime::SepOnly) continue;
      } catch (const ValidationError& e) {
        out.push_back(std::string("regimes: ") + e.what());
      }
    }
    if (data.source != "synth" && data.source != "files") out.push_back("data.source: must be synth or files");
    if (data.source == "files" && (data.vocab.empty() || data.corpus.empty() || data.qa.empty())) {
      out.push_back("data: source files needs vocab, corpus and qa paths");
    }
    if (data.n_qa < 20) out.push_back("data.n_qa: need at least 20 examples");
    if (data.val_fraction <= 0 || data.test_fraction <= 0 || data.val_fraction + data.test_fraction >= 1) {
      out.push_back("data: val_fraction and test_fraction must be positive and sum below 1");
    }
    if (data.qa_max_seq > model.max_seq) out.push_back("data.qa_max_seq: exceeds model.max_seq");
    try {
      model_config(8).validate();
    } catch (const ValidationError& e) {
      out.push_back(std::string("model: ") + e.what());
    }
    try {
      pretrain.hyper.validate();
    } catch (const ValidationError& e) {
      out.push_back(e.what());
    }
    if (finetune.full_lr <= 0) out.push_back("finetune.full_lr: must be positive");
    if (finetune.probe_lr <= 0) out.push_back("finetune.probe_lr: must be positive");
    if (finetune.batch_size < 1) out.push_back("finetune.batch_size: must be >= 1");
    if (finetune.max_epochs < 1) out.push_back("finetune.max_epochs: must be >= 1");
    if (finetune.patience < 1) out.push_back("finetune.patience: must be >= 1");
    if (pretrain.keep_every < 0 || finetune.keep_every < 0) out.push_back("keep_every: must be >= 0");
    if (cka_examples < 2) out.push_back("cka_examples: need at least 2");
    if (neuron_model != "frozen" && neuron_model != "full") out.push_back("neuron_model: must be frozen or full");
    if (!data::parse_role(ablation_role)) out.push_back("ablation_role: unknown role '" + ablation_role + "'");
    return out;
  }

  void validate() const {
    auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid experiment config:";
    for (const auto& s : p) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
};

inline ojson to_json(const ExperimentConfig& c) {
  const auto& d = c.data;
  const auto& ph = c.pretrain.hyper;
  const auto& a = c.analyses;
  return {
      {"name", c.name},
      {"scale", c.scale},
      {"desk", c.desk},
      {"store", c.store},
      {"seeds", c.seeds},
      {"regimes", c.regimes},
      {"jobs", c.jobs},
      {"data",
       {{"source", d.source}, {"synth_seed", d.synth_seed}, {"n_qa", d.n_qa}, {"n_docs", d.n_docs},
        {"two_clause_fraction", d.two_clause_fraction}, {"qa_discourse_fraction", d.qa_discourse_fraction},
        {"question_first", d.question_first}, {"qa_max_seq", d.qa_max_seq}, {"val_fraction", d.val_fraction},
        {"test_fraction", d.test_fraction}, {"vocab", d.vocab}, {"corpus", d.corpus}, {"qa", d.qa}}},
      {"model",
       {{"n_layers", c.model.n_layers}, {"d_model", c.model.d_model}, {"n_heads", c.model.n_heads},
        {"max_seq", c.model.max_seq}, {"dropout", c.model.dropout}}},
      {"pretrain",
       {{"lr", ph.lr}, {"batch_size", ph.batch_size}, {"warmup_steps", ph.warmup_steps},
        {"samples_per_epoch", ph.samples_per_epoch}, {"max_epochs", ph.max_epochs}, {"patience", ph.patience},
        {"label_smoothing", ph.label_smoothing}, {"weight_decay", ph.weight_decay}, {"clip_norm", ph.clip_norm},
        {"window", ph.window}, {"val_fraction", ph.val_fraction}, {"keep_every", c.pretrain.keep_every}}},
      {"finetune",
       {{"full_lr", c.finetune.full_lr}, {"probe_lr", c.finetune.probe_lr}, {"batch_size", c.finetune.batch_size},
        {"max_epochs", c.finetune.max_epochs}, {"patience", c.finetune.patience},
        {"keep_every", c.finetune.keep_every}}},
      {"analyses",
       {{"emergence", a.emergence}, {"cka", a.cka}, {"probe", a.probe}, {"neurons", a.neurons}, {"ablate", a.ablate},
        {"circuit", a.circuit}, {"retrain_ablation", a.retrain_ablation}, {"report", a.report}}},
      {"cka_examples", c.cka_examples},
      {"probe", c.probe.to_json()},
      {"neuron_model", c.neuron_model},
      {"ablation_role", c.ablation_role},
  };
}

namespace detail {

/// Copies `j[key]` into `out` when present; records a problem on type errors.
template <typename V>
void take(const nlohmann::json& j, const char* key, V& out, const std::string& where, std::vector<std::string>& bad) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    bad.push_back(where + key + ": wrong type");
  }
}

inline void unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where,
                         std::vector<std::string>& bad) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) bad.push_back(where + k + ": unknown key");
  }
}

}  // namespace detail

/// Applies the fields present in `j` on top of `c`. The scale preset is
/// expanded first when `j` names one, so file values override it.
inline ExperimentConfig apply_json(ExperimentConfig c, const nlohmann::json& j) {
  using detail::take;
  std::vector<std::string> bad;
  if (!j.is_object()) throw ValidationError("experiment config must be an object");
  detail::unknown_keys(j, {"name", "scale", "desk", "store", "seeds", "regimes", "jobs", "data", "model", "pretrain",
                           "finetune", "analyses", "cka_examples", "probe", "neuron_model", "ablation_role"},
                       "", bad);
  if (j.contains("scale") || j.contains("desk")) {
    std::string scale = c.scale;
    bool desk = c.desk;
    take(j, "scale", scale, "", bad);
    take(j, "desk", desk, "", bad);
    try {
      c = ExperimentConfig::from_preset(scale, desk);
    } catch (const ValidationError& e) {
      bad.push_back(e.what());
    }
  }
  take(j, "name", c.name, "", bad);
  take(j, "store", c.store, "", bad);
  take(j, "seeds", c.seeds, "", bad);
  take(j, "regimes", c.regimes, "", bad);
  take(j, "jobs", c.jobs, "", bad);
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::unknown_keys(d, {"source", "synth_seed", "n_qa", "n_docs", "two_clause_fraction", "qa_discourse_fraction",
                             "question_first", "qa_max_seq", "val_fraction", "test_fraction", "vocab", "corpus", "qa"},
                         "data.", bad);
    take(d, "source", c.data.source, "data.", bad);
    take(d, "synth_seed", c.data.synth_seed, "data.", bad);
    take(d, "n_qa", c.data.n_qa, "data.", bad);
    take(d, "n_docs", c.data.n_docs, "data.", bad);
    take(d, "two_clause_fraction", c.data.two_clause_fraction, "data.", bad);
    take(d, "qa_discourse_fraction", c.data.qa_discourse_fraction, "data.", bad);
    take(d, "question_first", c.data.question_first, "data.", bad);
    take(d, "qa_max_seq", c.data.qa_max_seq, "data.", bad);
    take(d, "val_fraction", c.data.val_fraction, "data.", bad);
    take(d, "test_fraction", c.data.test_fraction, "data.", bad);
    take(d, "vocab", c.data.vocab, "data.", bad);
    take(d, "corpus", c.data.corpus, "data.", bad);
    take(d, "qa", c.data.qa, "data.", bad);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::unknown_keys(m, {"n_layers", "d_model", "n_heads", "max_seq", "dropout"}, "model.", bad);
    take(m, "n_layers", c.model.n_layers, "model.", bad);
    take(m, "d_model", c.model.d_model, "model.", bad);
    take(m, "n_heads", c.model.n_heads, "model.", bad);
    take(m, "max_seq", c.model.max_seq, "model.", bad);
    take(m, "dropout", c.model.dropout, "model.", bad);
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    auto& h = c.pretrain.hyper;
    detail::unknown_keys(p, {"lr", "batch_size", "warmup_steps", "samples_per_epoch", "max_epochs", "patience",
                             "label_smoothing", "weight_decay", "clip_norm", "window", "val_fraction", "keep_every"},
                         "pretrain.", bad);
    take(p, "lr", h.lr, "pretrain.", bad);
    take(p, "batch_size", h.batch_size, "pretrain.", bad);
    take(p, "warmup_steps", h.warmup_steps, "pretrain.", bad);
    take(p, "samples_per_epoch", h.samples_per_epoch, "pretrain.", bad);
    take(p, "max_epochs", h.max_epochs, "pretrain.", bad);
    take(p, "patience", h.patience, "pretrain.", bad);
    take(p, "label_smoothing", h.label_smoothing, "pretrain.", bad);
    take(p, "weight_decay", h.weight_decay, "pretrain.", bad);
    take(p, "clip_norm", h.clip_norm, "pretrain.", bad);
    take(p, "window", h.window, "pretrain.", bad);
    take(p, "val_fraction", h.val_fraction, "pretrain.", bad);
    take(p, "keep_every", c.pretrain.keep_every, "pretrain.", bad);
  }
  if (j.contains("finetune")) {
    const auto& f = j["finetune"];
    detail::unknown_keys(f, {"full_lr", "probe_lr", "batch_size", "max_epochs", "patience", "keep_every"}, "finetune.",
                         bad);
    take(f, "full_lr", c.finetune.full_lr, "finetune.", bad);
    take(f, "probe_lr", c.finetune.probe_lr, "finetune.", bad);
    take(f, "batch_size", c.finetune.batch_size, "finetune.", bad);
    take(f, "max_epochs", c.finetune.max_epochs, "finetune.", bad);
    take(f, "patience", c.finetune.patience, "finetune.", bad);
    take(f, "keep_every", c.finetune.keep_every, "finetune.", bad);
  }
  if (j.contains("analyses")) {
    const auto& a = j["analyses"];
    detail::unknown_keys(a, {"emergence", "cka", "probe", "neurons", "ablate", "circuit", "retrain_ablation", "report"},
                         "analyses.", bad);
    take(a, "emergence", c.analyses.emergence, "analyses.", bad);
    take(a, "cka", c.analyses.cka, "analyses.", bad);
    take(a, "probe", c.analyses.probe, "analyses.", bad);
    take(a, "neurons", c.analyses.neurons, "analyses.", bad);
    take(a, "ablate", c.analyses.ablate, "analyses.", bad);
    take(a, "circuit", c.analyses.circuit, "analyses.", bad);
    take(a, "retrain_ablation", c.analyses.retrain_ablation, "analyses.", bad);
    take(a, "report", c.analyses.report, "analyses.", bad);
  }
  take(j, "cka_examples", c.cka_examples, "", bad);
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    detail::unknown_keys(p, {"n_train", "lr", "max_epochs", "patience", "batch_size", "holdout_fraction",
                             "max_answer_len"},
                         "probe.", bad);
    take(p, "n_train", c.probe.n_train, "probe.", bad);
    take(p, "lr", c.probe.lr, "probe.", bad);
    take(p, "max_epochs", c.probe.max_epochs, "probe.", bad);
    take(p, "patience", c.probe.patience, "probe.", bad);
    take(p, "batch_size", c.probe.batch_size, "probe.", bad);
    take(p, "holdout_fraction", c.probe.holdout_fraction, "probe.", bad);
    take(p, "max_answer_len", c.probe.max_answer_len, "probe.", bad);
  }
  take(j, "neuron_model", c.neuron_model, "", bad);
  take(j, "ablation_role", c.ablation_role, "", bad);
  if (!bad.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& s : bad) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
  return c;
}

/// `a.b.c=value` override; the value is parsed as JSON, falling back to a
/// plain string.
inline ExperimentConfig apply_override(const ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    patch = nlohmann::json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  return apply_json(c, patch);
}

}  // namespace srlprobe::pipeline

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "srlprobe/ablation/ablation.hpp"
#include "srlprobe/core/hash.hpp"
#include "srlprobe/data/synth.hpp"
#include "srlprobe/emergence/emergence.hpp"
#include "srlprobe/model/checkpoint.hpp"
#include "srlprobe/neurons/io.hpp"
#include "srlprobe/pipeline/config.hpp"
#include "srlprobe/reports/store.hpp"
#include "srlprobe/repsim/cka.hpp"
#include "srlprobe/repsim/probe.hpp"
#include "srlprobe/train/finetune.hpp"
#include "srlprobe/train/manifest.hpp"

namespace srlprobe::pipeline {

namespace fs = std::filesystem;
using train::Params;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingArtifactError("missing file: " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PipelineResult {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
};

/// Runs stages keyed by a hash of their inputs. A stage whose `stage.json`
/// records the same key and whose outputs all exist is skipped.
class StageRunner {
 public:
  StageRunner(fs::path root, std::ostream* log) : root_(std::move(root)), log_(log) {}

  std::string run(const std::string& id, const ojson& inputs, const std::vector<std::string>& outputs,
                  const std::function<void(const fs::path&)>& body) {
    const std::string key = hex64(fnv1a(inputs.dump()));
    keys_[id] = key;
    const fs::path dir = root_ / id;
    const fs::path stage_file = dir / "stage.json";
    if (fs::exists(stage_file)) {
      const auto prev = train::read_json(stage_file);
      bool complete = prev.value("key", std::string()) == key;
      for (const auto& o : outputs) complete = complete && fs::exists(dir / o);
      if (complete) {
        result_.skipped.push_back(id);
        if (log_) *log_ << "[skip] " << id << '\n';
        return key;
      }
    }
    if (log_) *log_ << "[run]  " << id << std::endl;
    fs::create_directories(dir);
    body(dir);
    ojson rec;
    rec["stage"] = id;
    rec["key"] = key;
    rec["inputs"] = inputs;
    rec["outputs"] = outputs;
    train::write_json(stage_file, rec);
    result_.executed.push_back(id);
    return key;
  }

  const PipelineResult& result() const noexcept { return result_; }
  ojson keys() const {
    ojson j = ojson::object();
    for (const auto& [id, k] : keys_) j[id] = k;
    return j;
  }

 private:
  fs::path root_;
  std::ostream* log_;
  PipelineResult result_;
  std::map<std::string, std::string> keys_;
};

struct DataSplits {
  data::TokenizerVocab vocab;
  std::vector<data::EncodedExample> train, val, test;
  std::vector<std::string> docs;
};

inline std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw MissingArtifactError("missing file: " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  train::write_text_atomic(p, text);
}

/// Builds the corpus, encodes the QA examples and splits them into
/// train/val/test in a seed-determined order.
inline void build_data(const ExperimentConfig& c, const fs::path& dir) {
  data::TokenizerVocab vocab;
  std::vector<std::string> docs;
  std::vector<data::QASRLExample> raw;
  if (c.data.source == "synth") {
    data::SynthOptions o;
    o.pretrain_docs = c.data.n_docs;
    o.qa_discourse_fraction = c.data.qa_discourse_fraction;
    o.two_clause_fraction = c.data.two_clause_fraction;
    o.question_first = c.data.question_first;
    auto corpus = data::synth_role_corpus(c.data.synth_seed, c.data.n_qa, o);
    vocab = data::synth_vocab();
    docs = std::move(corpus.pretrain_docs);
    raw = std::move(corpus.examples);
  } else {
    vocab = data::load_vocab(c.data.vocab);
    docs = read_lines(c.data.corpus);
    raw = data::load_raw_dataset(c.data.qa);
  }
  auto [enc, report] = data::prepare_dataset(vocab, raw, c.data.qa_max_seq);
  if (enc.size() < 20) throw ValidationError("data: fewer than 20 usable QA examples");
  std::vector<std::size_t> order(enc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(train::mix_seed(c.data.synth_seed, 0xDA7A));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = enc.size();
  const auto n_val = static_cast<std::size_t>(std::llround(c.data.val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(c.data.test_fraction * static_cast<double>(n)));
  std::vector<data::EncodedExample> tr, va, te;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n - n_val - n_test ? tr : (i < n - n_test ? va : te);
    dst.push_back(enc[order[i]]);
  }
  data::save_vocab(vocab, (dir / "vocab.txt").string());
  write_lines(dir / "corpus.txt", docs);
  data::save_encoded(tr, (dir / "qa_train.jsonl").string());
  data::save_encoded(va, (dir / "qa_val.jsonl").string());
  data::save_encoded(te, (dir / "qa_test.jsonl").string());
  train::write_json(dir / "skip_report.json", report.to_json());
}

inline DataSplits load_data(const fs::path& dir) {
  DataSplits d;
  d.vocab = data::load_vocab((dir / "vocab.txt").string());
  d.train = data::load_encoded((dir / "qa_train.jsonl").string(), d.vocab.pad_id());
  d.val = data::load_encoded((dir / "qa_val.jsonl").string(), d.vocab.pad_id());
  d.test = data::load_encoded((dir / "qa_test.jsonl").string(), d.vocab.pad_id());
  d.docs = read_lines(dir / "corpus.txt");
  return d;
}

inline Params load_params(const fs::path& p) { return model::load_checkpoint(p.string()).params; }

/// Kept epoch checkpoints of a run directory, ascending by epoch.
inline std::vector<std::pair<int, Params>> epoch_series(const fs::path& dir) {
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    int epoch = 0;
    if (std::sscanf(name.c_str(), "epoch_%d.eprb", &epoch) == 1 && name.ends_with(".eprb")) found.push_back({epoch, e.path()});
  }
  std::sort(found.begin(), found.end());
  std::vector<std::pair<int, Params>> out;
  for (const auto& [ep, path] : found) out.push_back({ep, load_params(path)});
  return out;
}

inline std::string seed_dir(std::uint64_t s) { return "seed_" + std::to_string(s); }

/// Pre-training, the regime fine-tunes and every enabled analysis, with
/// completed stages skipped.
inline PipelineResult run_pipeline(const ExperimentConfig& c, std::ostream* log = &std::cerr) {
  c.validate();
  for (const char* r : {"random", "frozen", "full"}) {
    if (c.analyses.emergence && std::find(c.regimes.begin(), c.regimes.end(), r) == c.regimes.end()) {
      throw ValidationError(std::string("analyses.emergence needs regime '") + r + "'");
    }
  }
  const fs::path store_root = c.store;
  const std::string scale_dir = c.desk ? c.scale + "-desk" : c.scale;
  const fs::path root = store_root / scale_dir;
  const std::string rel_root = scale_dir + "/";
  StageRunner stages(root, log);
  reports::RunStore store(store_root);
  train::write_json(root / "config.json", to_json(c));

  // data
  ojson data_in = to_json(c)["data"];
  if (c.data.source == "files") {
    data_in["vocab_hash"] = hex64(fnv1a(read_bytes(c.data.vocab)));
    data_in["corpus_hash"] = hex64(fnv1a(read_bytes(c.data.corpus)));
    data_in["qa_hash"] = hex64(fnv1a(read_bytes(c.data.qa)));
  }
  const std::string data_key =
      stages.run("data", data_in, {"vocab.txt", "corpus.txt", "qa_train.jsonl", "qa_val.jsonl", "qa_test.jsonl"},
                 [&](const fs::path& dir) { build_data(c, dir); });
  const auto D = load_data(root / "data");
  const auto mcfg = c.model_config(D.vocab.size());
  const ojson mjson = train::config_json(mcfg);
  std::optional<train::LmCorpus> lm;
  auto lm_corpus = [&]() -> const train::LmCorpus& {
    if (!lm) {
      const int window = c.pretrain.hyper.window > 0 ? c.pretrain.hyper.window : mcfg.max_seq;
      lm = train::make_lm_corpus(train::tokenize_documents(D.vocab, D.docs), window, c.pretrain.hyper.val_fraction);
    }
    return *lm;
  };

  // pre-training, one backbone per seed
  std::map<std::uint64_t, std::string> pre_key;
  for (auto seed : c.seeds) {
    const std::string id = "pretrain/" + seed_dir(seed);
    ojson in = {{"data", data_key}, {"model", mjson}, {"hyper", c.pretrain.hyper.to_json()},
                {"keep_every", c.pretrain.keep_every}, {"seed", seed}};
    pre_key[seed] = stages.run(id, in, {"manifest.json", "best.eprb"}, [&](const fs::path& dir) {
      model::CheckpointMeta meta{seed, 0, "pretrain", fnv1a(data_key), ""};
      train::CheckpointSink sink(dir, c.pretrain.keep_every, meta);
      sink.initial(model::init_params<float>(mcfg, seed));
      auto r = train::pretrain(mcfg, lm_corpus(), c.pretrain.hyper, seed, std::ref(sink));
      train::TrainManifest m;
      m.kind = "pretrain";
      m.config = mcfg;
      m.regime = "pretrain";
      m.seed = seed;
      m.hyper = c.pretrain.hyper.to_json();
      m.inputs = {{"data", data_key}};
      m.epochs = r.epochs;
      m.checkpoints = sink.written();
      m.best_epoch = r.best_epoch;
      m.stop_epoch = r.stop_epoch;
      m.early_stopped = r.early_stopped;
      train::write_json(dir / "manifest.json", m.to_json());
    });
    store.put({"pretrain", c.scale, "", seed}, {{"manifest", rel_root + id + "/manifest.json"}, {"best", rel_root + id + "/best.eprb"}});
  }

  // regime fine-tunes
  std::map<std::pair<std::string, std::uint64_t>, std::string> ft_key;
  for (const auto& rname : c.regimes) {
    const auto regime = train::parse_regime(rname);
    const train::RegimeSpec spec{regime, regime == train::Regime::SepOnly ? D.vocab.sep_id() : -1};
    const auto hyper = c.finetune.hyper(regime);
    const int keep = regime == train::Regime::Full ? c.finetune.keep_every : 0;
    for (auto seed : c.seeds) {
      const std::string id = "finetune/" + rname + "/" + seed_dir(seed);
      ojson in = {{"data", data_key}, {"regime", rname}, {"hyper", hyper.to_json()}, {"keep_every", keep}, {"seed", seed}};
      if (spec.backbone() == train::BackboneSource::Pretrained) in["backbone"] = pre_key.at(seed);
      else in["model"] = mjson;
      ft_key[{rname, seed}] = stages.run(id, in, {"manifest.json", "best.eprb", "report.json"}, [&](const fs::path& dir) {
        Params backbone = spec.backbone() == train::BackboneSource::Pretrained
                              ? load_params(root / "pretrain" / seed_dir(seed) / "best.eprb")
                              : model::init_params<float>(mcfg, seed);
        model::CheckpointMeta meta{seed, 0, rname, fnv1a(data_key), ""};
        train::CheckpointSink sink(dir, keep, meta);
        auto r = train::finetune(backbone, spec.backbone(), spec, D.train, D.val, hyper, seed, nullptr, std::ref(sink));
        train::TrainManifest m;
        m.kind = "finetune";
        m.config = mcfg;
        m.regime = rname;
        m.seed = seed;
        m.hyper = hyper.to_json();
        m.inputs = in;
        m.epochs = r.epochs;
        m.checkpoints = sink.written();
        m.best_epoch = r.best_epoch;
        m.stop_epoch = r.stop_epoch;
        m.early_stopped = r.early_stopped;
        train::write_json(dir / "manifest.json", m.to_json());
        ojson rep;
        rep["val"] = eval::evaluate(r.best, D.val, true, hyper.max_answer_len).to_json();
        rep["test"] = eval::evaluate(r.best, D.test, true, hyper.max_answer_len).to_json();
        train::write_json(dir / "report.json", rep);
      });
      store.put({"finetune", c.scale, rname, seed},
                {{"manifest", rel_root + id + "/manifest.json"}, {"best", rel_root + id + "/best.eprb"},
                 {"report", rel_root + id + "/report.json"}});
    }
  }
  auto has_regime = [&](const char* r) { return std::find(c.regimes.begin(), c.regimes.end(), r) != c.regimes.end(); };
  auto ft_path = [&](const std::string& r, std::uint64_t s) { return root / "finetune" / r / seed_dir(s); };

  // emergence
  if (c.analyses.emergence) {
    ojson in = ojson::object();
    for (const auto& [k, v] : ft_key) in[k.first + "/" + std::to_string(k.second)] = v;
    stages.run("emergence", in, {"emergence.json"}, [&](const fs::path& dir) {
      std::vector<emergence::SeedF1> rows;
      for (auto seed : c.seeds) {
        auto f1 = [&](const char* r) {
          return train::read_json(ft_path(r, seed) / "report.json").at("test").at("f1").get<double>();
        };
        rows.push_back({seed, f1("full"), f1("frozen"), f1("random")});
      }
      train::write_json(dir / "emergence.json", emergence::build_report(rows).to_json());
    });
    store.put({"emergence", c.scale, "", 0}, {{"report", rel_root + "emergence/emergence.json"}});
  }

  // probe set shared by CKA: test, then val, then train examples
  std::vector<data::EncodedExample> probe_set;
  for (const auto* part : {&D.test, &D.val, &D.train}) {
    for (const auto& x : *part) {
      if (probe_set.size() < c.cka_examples) probe_set.push_back(x);
    }
  }

  for (auto seed : c.seeds) {
    const std::string sd = seed_dir(seed);
    const fs::path pre_dir = root / "pretrain" / sd;
    if (c.analyses.cka && has_regime("full")) {
      const std::string id = "cka/" + sd;
      ojson in = {{"backbone", pre_key.at(seed)}, {"full", ft_key.at({"full", seed})}, {"n", probe_set.size()}};
      stages.run(id, in, {"cka.csv"}, [&](const fs::path& dir) {
        const auto null_model = load_params(pre_dir / "best.eprb");
        std::vector<std::pair<int, Params>> series = {{0, null_model}};
        for (auto& [ep, p] : epoch_series(ft_path("full", seed))) {
          if (ep > 0) series.emplace_back(ep, std::move(p));
        }
        train::write_text_atomic(dir / "cka.csv", repsim::temporal_cka(null_model, series, probe_set).to_csv());
      });
      store.put({"cka", c.scale, "full", seed}, {{"series", rel_root + id + "/cka.csv"}});
    }
    if (c.analyses.probe) {
      const std::string id = "probe/" + sd;
      ojson in = {{"backbone", pre_key.at(seed)}, {"probe", c.probe.to_json()}, {"seed", seed}};
      if (has_regime("frozen")) in["frozen"] = ft_key.at({"frozen", seed});
      const bool series_here = seed == c.seeds.front();
      std::vector<std::string> outs = {"layers.csv"};
      if (series_here) outs.push_back("pretrain_series.csv");
      stages.run(id, in, outs, [&](const fs::path& dir) {
        std::vector<std::pair<std::string, Params>> conds;
        conds.emplace_back("random_init", model::init_params<float>(mcfg, seed));
        conds.emplace_back("pretrained", load_params(pre_dir / "best.eprb"));
        if (has_regime("frozen")) conds.emplace_back("frozen_probe", load_params(ft_path("frozen", seed) / "best.eprb"));
        std::ostringstream os;
        os << "layer,condition,f1\n";
        for (const auto& [name, p] : conds) {
          for (int l = 0; l < mcfg.n_layers + 2; ++l) {
            const auto r = repsim::layer_probe(p, l, D.train, D.val, c.probe, seed);
            os << r.label << ',' << name << ',' << reports::fmt(r.f1) << '\n';
          }
        }
        train::write_text_atomic(dir / "layers.csv", os.str());
        if (series_here) {
          std::vector<int> layers(static_cast<std::size_t>(mcfg.n_layers + 2));
          std::iota(layers.begin(), layers.end(), 0);
          const auto s = repsim::pretrain_series_probe(epoch_series(pre_dir), layers, D.train, D.val, c.probe, seed);
          train::write_text_atomic(dir / "pretrain_series.csv", s.to_csv(mcfg.n_layers));
        }
      });
      std::map<std::string, std::string> files = {{"layers", rel_root + id + "/layers.csv"}};
      if (series_here) files["pretrain_series"] = rel_root + id + "/pretrain_series.csv";
      store.put({"probe", c.scale, "", seed}, files);
    }
    const std::string nm = c.neuron_model;
    const bool neurons_ok = c.analyses.neurons && has_regime(nm.c_str());
    if (neurons_ok) {
      const std::string id = "neurons/" + sd;
      ojson in = {{"model", ft_key.at({nm, seed})}, {"which", nm}};
      stages.run(id, in, {"selection.json", "pca.csv", "coactivation.csv", "powerlaw.json"}, [&](const fs::path& dir) {
        const auto p = load_params(ft_path(nm, seed) / "best.eprb");
        const auto set = neurons::capture_role_activations(p, D.val);
        std::vector<neurons::SelectedNeuron> sel;
        std::ostringstream pca;
        pca << "layer,pc1,pc2,role\n";
        for (int l = 0; l < set.n_layers(); ++l) {
          auto s = neurons::select_neurons(set, l);
          sel.insert(sel.end(), s.begin(), s.end());
          const auto proj = neurons::pca_projection(set, l, 2);
          for (Eigen::Index i = 0; i < proj.rows(); ++i) {
            pca << l << ',' << reports::fmt(proj(i, 0)) << ',' << reports::fmt(proj.cols() > 1 ? proj(i, 1) : 0.0) << ','
                << data::role_name(set.roles[static_cast<std::size_t>(i)]) << '\n';
          }
        }
        train::write_json(dir / "selection.json", neurons::to_json(neurons::make_selection_file(set, sel)));
        train::write_text_atomic(dir / "pca.csv", pca.str());
        ojson fit;
        std::string csv = "layer,rho_within,se_within,pairs_within,rho_across,se_across,pairs_across,delta_rho,skipped,total\n";
        try {
          const auto rep = neurons::coactivation(set, sel);
          csv = neurons::coactivation_csv(rep);
          fit = neurons::to_json(neurons::powerlaw_fit(neurons::delta_by_depth(rep, set.n_layers())));
        } catch (const ValidationError& e) {
          fit = {{"error", e.what()}};
        }
        train::write_text_atomic(dir / "coactivation.csv", csv);
        train::write_json(dir / "powerlaw.json", fit);
      });
      store.put({"neurons", c.scale, nm, seed},
                {{"selection", rel_root + id + "/selection.json"}, {"pca", rel_root + id + "/pca.csv"},
                 {"coactivation", rel_root + id + "/coactivation.csv"}, {"powerlaw", rel_root + id + "/powerlaw.json"}});
    }
    if (c.analyses.ablate && neurons_ok) {
      const std::string id = "ablation/" + sd;
      ojson in = {{"model", ft_key.at({nm, seed})}, {"role", c.ablation_role}, {"retrain", c.analyses.retrain_ablation}};
      if (c.analyses.retrain_ablation) {
        in["backbone"] = pre_key.at(seed);
        in["hyper"] = c.finetune.hyper(train::Regime::Full).to_json();
      }
      stages.run(id, in, {"run.json", "target_mask.txt", "control_mask.txt"}, [&](const fs::path& dir) {
        const auto role = *data::parse_role(c.ablation_role);
        const auto sel = neurons::selection_from_json(train::read_json(root / "neurons" / sd / "selection.json"));
        std::vector<neurons::SelectedNeuron> picked;
        for (const auto& n : sel.neurons) {
          if (n.role == role) picked.push_back(n);
        }
        const auto target = neurons::selection_mask(picked);
        model::save_mask(target, (dir / "target_mask.txt").string());
        ojson out;
        out["role"] = c.ablation_role;
        out["target_size"] = target.size();
        if (target.empty()) {
          model::save_mask({}, (dir / "control_mask.txt").string());
          out["note"] = "no selected units for this role";
          train::write_json(dir / "run.json", out);
          return;
        }
        const auto control = ablation::random_control_mask(target, mcfg.d_ff(), seed);
        model::save_mask(control, (dir / "control_mask.txt").string());
        const auto probed = load_params(ft_path(nm, seed) / "best.eprb");
        out["no_retrain"] = {{"target", ablation::ablate_noretrain({{seed, probed}}, target, D.test).to_json()},
                             {"control", ablation::ablate_noretrain({{seed, probed}}, control, D.test).to_json()}};
        if (c.analyses.retrain_ablation && has_regime("full")) {
          const auto base = eval::F1Report::from_json(train::read_json(ft_path("full", seed) / "report.json").at("test"));
          const auto pre = load_params(pre_dir / "best.eprb");
          const auto h = c.finetune.hyper(train::Regime::Full);
          out["retrain"] = {
              {"target", ablation::ablate_retrain(pre, target, D.train, D.val, D.test, h, {seed}, {{seed, base}}).to_json()},
              {"control", ablation::ablate_retrain(pre, control, D.train, D.val, D.test, h, {seed}, {{seed, base}}).to_json()}};
        }
        train::write_json(dir / "run.json", out);
      });
      store.put({"ablation", c.scale, nm, seed}, {{"run", rel_root + id + "/run.json"}});
    }
  }

  if (c.analyses.circuit && has_regime("full")) {
    ojson in = ojson::object();
    for (auto seed : c.seeds) in[std::to_string(seed)] = ft_key.at({"full", seed});
    in["role"] = c.ablation_role;
    stages.run("circuit", in, {"circuit.csv", "circuit.json"}, [&](const fs::path& dir) {
      std::vector<std::pair<std::uint64_t, Params>> models;
      for (auto seed : c.seeds) models.emplace_back(seed, load_params(ft_path("full", seed) / "best.eprb"));
      const auto rep = ablation::circuit_analysis(models, D.test, *data::parse_role(c.ablation_role));
      train::write_text_atomic(dir / "circuit.csv", rep.to_csv());
      train::write_json(dir / "circuit.json", rep.to_json());
    });
    store.put({"circuit", c.scale, "full", 0}, {{"csv", rel_root + "circuit/circuit.csv"}});
  }

  store.save_index();
  if (c.analyses.report) {
    ojson in = {{"index", store.index_json()}, {"stages", stages.keys()}};
    stages.run("report", in, {"table2.csv"}, [&](const fs::path& dir) {
      const auto t = reports::emit_table2(store);
      train::write_text_atomic(dir / "table2.csv", t.csv);
      for (const auto& id : reports::figure_ids()) {
        try {
          reports::write_plotdata(store, id, dir);
        } catch (const MissingArtifactError&) {
        }
      }
      ojson warn = t.warnings;
      train::write_json(dir / "warnings.json", warn);
    });
  }
  return stages.result();
}

}  // namespace srlprobe::pipeline

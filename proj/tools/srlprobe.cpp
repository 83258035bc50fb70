// srlprobe command-line entry point.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "srlprobe/ablation/ablation.hpp"
#include "srlprobe/data/synth.hpp"
#include "srlprobe/emergence/emergence.hpp"
#include "srlprobe/model/checkpoint.hpp"
#include "srlprobe/neurons/io.hpp"
#include "srlprobe/pipeline/pipeline.hpp"
#include "srlprobe/reports/store.hpp"
#include "srlprobe/repsim/cka.hpp"
#include "srlprobe/repsim/probe.hpp"
#include "srlprobe/train/finetune.hpp"
#include "srlprobe/train/manifest.hpp"

namespace fs = std::filesystem;
using namespace srlprobe;
using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ValidationError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("no seeds given");
  return out;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    train::write_text_atomic(path, text);
  }
}

model::Checkpoint load_ckpt(const std::string& path) {
  if (!fs::exists(path)) throw MissingArtifactError("missing checkpoint " + path);
  return model::load_checkpoint(path);
}

std::vector<data::EncodedExample> load_data(const std::string& path) {
  if (!fs::exists(path)) throw MissingArtifactError("missing dataset " + path);
  return data::load_encoded(path);
}

/// Checkpoints in a directory with the seed stored in each file.
std::vector<std::pair<std::uint64_t, train::Params>> load_ckpt_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw MissingArtifactError("missing checkpoint directory " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() == ".eprb" && e.path().filename() == "best.eprb") files.push_back(e.path());
  }
  if (files.empty()) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".eprb") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::uint64_t, train::Params>> out;
  for (const auto& f : files) {
    auto ck = model::load_checkpoint(f.string());
    out.emplace_back(ck.meta.seed, std::move(ck.params));
  }
  if (out.empty()) throw MissingArtifactError("no checkpoints in " + dir);
  return out;
}

void add_data(CLI::App& app) {
  auto* data = app.add_subcommand("data", "Tokenise and encode datasets, or generate the synthetic corpus");
  data->require_subcommand(1);

  auto* prep = data->add_subcommand("prepare", "Encode raw QA records into model inputs");
  static std::string vocab, in, out;
  static int max_seq = 512;
  prep->add_option("--vocab", vocab, "Vocabulary file")->required();
  prep->add_option("--in", in, "Raw QA records (JSON lines)")->required();
  prep->add_option("--out", out, "Encoded output (JSON lines)")->required();
  prep->add_option("--max-seq", max_seq, "Maximum sequence length");
  prep->callback([] {
    auto v = data::load_vocab(vocab);
    auto [enc, report] = data::prepare_dataset(v, data::load_raw_dataset(in), max_seq);
    data::save_encoded(enc, out);
    train::write_json(out + ".skipped.json", report.to_json());
    std::cerr << "kept " << report.kept << " of " << report.total << " examples\n";
  });

  auto* synth = data->add_subcommand("synth", "Generate the synthetic role corpus");
  static std::uint64_t seed = 7;
  static std::size_t n = 2000, docs = 0;
  static double two_clause = 1.0, discourse = 0.5;
  static bool question_first = true;
  static std::string sout, docs_out, vocab_out;
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--n", n, "Number of QA examples");
  synth->add_option("--out", sout, "Raw QA records output")->required();
  synth->add_option("--docs", docs, "Pre-training documents (0 = n)");
  synth->add_option("--docs-out", docs_out, "Pre-training corpus output, one document per line");
  synth->add_option("--vocab-out", vocab_out, "Vocabulary output");
  synth->add_option("--two-clause", two_clause, "Fraction of two-clause sentences");
  synth->add_option("--discourse", discourse, "Fraction of QA discourse documents");
  synth->add_option("--question-first", question_first, "Put questions before sentences in discourse documents");
  synth->callback([] {
    data::SynthOptions o;
    o.pretrain_docs = docs;
    o.two_clause_fraction = two_clause;
    o.qa_discourse_fraction = discourse;
    o.question_first = question_first;
    auto c = data::synth_role_corpus(seed, n, o);
    data::save_raw_dataset(c.examples, sout);
    if (!docs_out.empty()) write_out(docs_out, c.pretrain_text());
    if (!vocab_out.empty()) data::save_vocab(data::synth_vocab(), vocab_out);
  });
}

void add_train(CLI::App& app) {
  auto* tr = app.add_subcommand("train", "Pre-train or fine-tune a model");
  tr->require_subcommand(1);

  auto* pre = tr->add_subcommand("pretrain", "Causal language-model pre-training");
  static std::string scale = "tiny", corpus, vocab, out;
  static std::uint64_t seed = 42;
  static std::int64_t samples = -1;
  static int epochs = -1, keep_every = 5, window = 0, d_model = 0, max_seq = 0;
  static double lr = 0;
  pre->add_option("--config", scale, "Scale preset (tiny, small, base, medium)");
  pre->add_option("--corpus", corpus, "Corpus, one document per line")->required();
  pre->add_option("--vocab", vocab, "Vocabulary file")->required();
  pre->add_option("--seed", seed, "Seed");
  pre->add_option("--out", out, "Output directory")->required();
  pre->add_option("--samples-per-epoch", samples, "Override sequences per epoch (0 = all windows)");
  pre->add_option("--max-epochs", epochs, "Override maximum epochs");
  pre->add_option("--lr", lr, "Override learning rate");
  pre->add_option("--window", window, "Training window length (default max_seq)");
  pre->add_option("--d-model", d_model, "Override model width");
  pre->add_option("--max-seq", max_seq, "Override maximum sequence length");
  pre->add_option("--keep-every", keep_every, "Keep every k-th epoch checkpoint");
  pre->callback([] {
    auto preset = model::find_preset(scale);
    auto v = data::load_vocab(vocab);
    auto cfg = preset.model;
    cfg.vocab = v.size();
    if (d_model > 0) cfg.d_model = d_model;
    if (max_seq > 0) cfg.max_seq = max_seq;
    cfg.validate();
    train::PretrainHyper h;
    h.lr = lr > 0 ? lr : preset.pretrain_lr;
    h.batch_size = preset.pretrain_batch;
    h.warmup_steps = preset.warmup_steps;
    h.samples_per_epoch = samples >= 0 ? samples : preset.samples_per_epoch;
    h.max_epochs = epochs > 0 ? epochs : preset.pretrain_max_epochs;
    h.patience = preset.pretrain_patience;
    h.window = window;
    std::vector<std::string> docs;
    {
      std::ifstream in(corpus);
      if (!in) throw MissingArtifactError("missing corpus " + corpus);
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) docs.push_back(line);
      }
    }
    const auto text_hash = fnv1a(pipeline::read_bytes(corpus));
    auto lm = train::make_lm_corpus(train::tokenize_documents(v, docs), window > 0 ? window : cfg.max_seq, h.val_fraction);
    train::CheckpointSink sink(out, keep_every, {seed, 0, "pretrain", text_hash, ""});
    sink.initial(model::init_params<float>(cfg, seed));
    auto r = train::pretrain(cfg, lm, h, seed, std::ref(sink));
    train::TrainManifest m{"pretrain", cfg, "pretrain", seed, h.to_json(),
                           {{"corpus_hash", pipeline::hex64(text_hash)}, {"scale", scale}},
                           r.epochs, sink.written(), r.best_epoch, r.stop_epoch, r.early_stopped};
    train::write_json(fs::path(out) / "manifest.json", m.to_json());
  });

  auto* ft = tr->add_subcommand("finetune", "Span-extraction fine-tuning under one regime");
  static std::string regime = "full", ckpt, data_path, val_path, fout, mask_path;
  static std::uint64_t fseed = 42;
  static double flr = 0;
  static int fepochs = 30, batch = 32, patience = 8;
  ft->add_option("--regime", regime, "full, frozen, random or sep-only");
  ft->add_option("--ckpt", ckpt, "Pre-trained checkpoint (configuration source for random)")->required();
  ft->add_option("--data", data_path, "Encoded training examples")->required();
  ft->add_option("--val", val_path, "Encoded validation examples")->required();
  ft->add_option("--seed", fseed, "Seed");
  ft->add_option("--out", fout, "Output directory")->required();
  ft->add_option("--ablate", mask_path, "Mask file held at zero throughout training");
  ft->add_option("--lr", flr, "Learning rate (default by regime)");
  ft->add_option("--max-epochs", fepochs, "Maximum epochs");
  ft->add_option("--batch", batch, "Batch size");
  ft->add_option("--patience", patience, "Early-stopping patience");
  ft->callback([] {
    const auto reg = train::parse_regime(regime);
    auto ck = load_ckpt(ckpt);
    int sep = -1;
    if (reg == train::Regime::SepOnly) {
      const auto vocab_file = fs::path(ckpt).parent_path() / "vocab.txt";
      sep = fs::exists(vocab_file) ? data::load_vocab(vocab_file.string()).sep_id() : data::synth_vocab().sep_id();
    }
    const train::RegimeSpec spec{reg, sep};
    auto backbone = spec.backbone() == train::BackboneSource::Pretrained ? ck.params
                                                                          : model::init_params<float>(ck.params.config, fseed);
    train::FinetuneHyper h;
    h.lr = flr > 0 ? flr : (reg == train::Regime::Full ? 1e-3 : 1e-2);
    h.max_epochs = fepochs;
    h.batch_size = batch;
    h.patience = patience;
    std::optional<model::AblationMask> mask;
    if (!mask_path.empty()) mask = model::load_mask(mask_path);
    const auto trn = load_data(data_path), val = load_data(val_path);
    train::CheckpointSink sink(fout, 1, {fseed, 0, regime, ck.meta.corpus_hash, ""});
    auto r = train::finetune(backbone, spec.backbone(), spec, trn, val, h, fseed, mask ? &*mask : nullptr, std::ref(sink));
    ojson inputs = {{"ckpt", fs::path(ckpt).filename().string()}, {"data", pipeline::hex64(fnv1a(pipeline::read_bytes(data_path)))}};
    if (mask) inputs["mask"] = model::format_mask(*mask);
    train::TrainManifest m{"finetune", ck.params.config, regime, fseed, h.to_json(), inputs,
                           r.epochs, sink.written(), r.best_epoch, r.stop_epoch, r.early_stopped};
    train::write_json(fs::path(fout) / "manifest.json", m.to_json());
    ojson rep;
    rep["val"] = eval::evaluate(r.best, val, true, h.max_answer_len).to_json();
    train::write_json(fs::path(fout) / "report.json", rep);
  });
}

void add_eval(CLI::App& app) {
  auto* ev = app.add_subcommand("eval", "Evaluate span F1");
  ev->require_subcommand(1);
  auto* run = ev->add_subcommand("run", "Score a checkpoint on an encoded dataset");
  static std::string ckpt, data_path, out;
  static bool by_role = false;
  static int max_len = eval::kDefaultMaxAnswerLen;
  run->add_option("--ckpt", ckpt, "Checkpoint")->required();
  run->add_option("--data", data_path, "Encoded examples")->required();
  run->add_flag("--by-role", by_role, "Add per-role F1");
  run->add_option("--max-answer-len", max_len, "Longest decoded answer");
  run->add_option("--out", out, "Report output (default stdout)");
  run->callback([] {
    auto rep = eval::evaluate(load_ckpt(ckpt).params, load_data(data_path), by_role, max_len);
    write_out(out, rep.to_json().dump(2) + "\n");
  });
}

void add_emerge(CLI::App& app) {
  auto* em = app.add_subcommand("emerge", "Emergence scores across regimes and seeds");
  em->require_subcommand(1);
  auto* comp = em->add_subcommand("compute", "Collect fine-tune reports and compute E");
  static std::string reports_dir, out, table;
  comp->add_option("--reports", reports_dir, "Directory searched for report.json next to manifest.json")->required();
  comp->add_option("--out", out, "Emergence report output (default stdout)");
  comp->add_option("--table", table, "Table-2-shaped CSV output");
  comp->callback([] {
    if (!fs::is_directory(reports_dir)) throw MissingArtifactError("missing directory " + reports_dir);
    std::map<std::uint64_t, std::map<std::string, double>> f1;
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(reports_dir)) {
      if (e.path().filename() == "report.json" && fs::exists(e.path().parent_path() / "manifest.json")) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    for (const auto& p : found) {
      const auto m = train::read_json(p.parent_path() / "manifest.json");
      const auto r = train::read_json(p);
      const auto& part = r.contains("test") ? r.at("test") : r.at("val");
      f1[m.at("seed").get<std::uint64_t>()][m.at("regime").get<std::string>()] = part.at("f1").get<double>();
    }
    std::vector<emergence::SeedF1> rows;
    for (const auto& [seed, regs] : f1) {
      if (!regs.count("full") || !regs.count("frozen") || !regs.count("random")) {
        std::cerr << "warning: seed " << seed << " lacks a regime; skipped\n";
        continue;
      }
      rows.push_back({seed, regs.at("full"), regs.at("frozen"), regs.at("random")});
    }
    const auto rep = emergence::build_report(rows);
    write_out(out, rep.to_json().dump(2) + "\n");
    if (!table.empty()) {
      std::ostringstream os;
      os << "row,value\n";
      for (const char* k : {"random", "frozen", "full"}) {
        const auto& m = rep.summary.at(k);
        os << k << ',' << (m.n > 1 ? emergence::format_mean_std(m, 1, 100.0) : reports::fmt(100.0 * m.mean)) << '\n';
      }
      if (rep.summary.count("E")) {
        const auto& m = rep.summary.at("E");
        os << "E," << (m.n > 1 ? emergence::format_mean_std(m, 2) : reports::fmt(m.mean)) << '\n';
      }
      write_out(table, os.str());
    }
  });
}

void add_repsim(CLI::App& app) {
  auto* rs = app.add_subcommand("repsim", "Representation similarity and layer probes");
  rs->require_subcommand(1);

  auto* cka = rs->add_subcommand("cka", "Temporal CKA of epoch checkpoints against a null model");
  static std::string null_path, ckpts, data_path, out;
  static std::size_t n = 500;
  cka->add_option("--null", null_path, "Null (pre-trained) checkpoint")->required();
  cka->add_option("--ckpts", ckpts, "Directory of epoch_NNN.eprb checkpoints")->required();
  cka->add_option("--data", data_path, "Encoded probe examples")->required();
  cka->add_option("--n", n, "Probe-set size");
  cka->add_option("--out", out, "CSV output (default stdout)");
  cka->callback([] {
    const auto null_model = load_ckpt(null_path).params;
    auto xs = load_data(data_path);
    if (xs.size() > n) xs.resize(n);
    std::vector<std::pair<int, train::Params>> series = {{0, null_model}};
    for (auto& [ep, p] : pipeline::epoch_series(ckpts)) {
      if (ep > 0) series.emplace_back(ep, std::move(p));
    }
    write_out(out, repsim::temporal_cka(null_model, series, xs).to_csv());
  });

  auto* probe = rs->add_subcommand("probe", "Linear span probe on one layer");
  static std::string pckpt, ptrain, pval, pout;
  static int layer = 0;
  static std::uint64_t seed = 42;
  static repsim::ProbeHyper h;
  probe->add_option("--ckpt", pckpt, "Checkpoint")->required();
  probe->add_option("--layer", layer, "0 = embeddings, 1..L = blocks, L+1 = final norm")->required();
  probe->add_option("--data", ptrain, "Encoded probe-training examples")->required();
  probe->add_option("--val", pval, "Encoded evaluation examples")->required();
  probe->add_option("--n", h.n_train, "Probe training examples");
  probe->add_option("--lr", h.lr, "Learning rate");
  probe->add_option("--max-epochs", h.max_epochs, "Maximum epochs");
  probe->add_option("--seed", seed, "Seed");
  probe->add_option("--out", pout, "Result output (default stdout)");
  probe->callback([] {
    auto r = repsim::layer_probe(load_ckpt(pckpt).params, layer, load_data(ptrain), load_data(pval), h, seed);
    ojson j = {{"layer", r.layer}, {"label", r.label}, {"f1", r.f1}, {"n_train", r.n_train}, {"hyper", h.to_json()}};
    write_out(pout, j.dump(2) + "\n");
  });
}

void add_neurons(CLI::App& app) {
  auto* nr = app.add_subcommand("neurons", "Role-selective feed-forward units");
  nr->require_subcommand(1);

  auto* sel = nr->add_subcommand("select", "PCA and ANOVA selection over every layer");
  static std::string ckpt, data_path, out;
  static neurons::SelectionOptions opt;
  sel->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sel->add_option("--data", data_path, "Role-labelled encoded examples")->required();
  sel->add_option("--out", out, "Selection output")->required();
  sel->add_option("--p", opt.p_threshold, "ANOVA p threshold");
  sel->callback([] {
    const auto p = load_ckpt(ckpt).params;
    const auto set = neurons::capture_role_activations(p, load_data(data_path));
    std::vector<neurons::SelectedNeuron> all;
    for (int l = 0; l < set.n_layers(); ++l) {
      auto s = neurons::select_neurons(set, l, opt);
      all.insert(all.end(), s.begin(), s.end());
    }
    train::write_json(out, neurons::to_json(neurons::make_selection_file(set, all)));
    model::save_mask(neurons::selection_mask(all), out + ".mask");
    std::cerr << all.size() << " units selected\n";
  });

  auto* co = nr->add_subcommand("coactivation", "Within- and across-role correlations of selected units");
  static std::string sel_path, cout_path, fit_path;
  co->add_option("--selection", sel_path, "Selection file")->required();
  co->add_option("--out", cout_path, "CSV output (default stdout)");
  co->add_option("--fit", fit_path, "Power-law fit output");
  co->callback([] {
    const auto f = neurons::selection_from_json(train::read_json(sel_path));
    const auto rep = neurons::coactivation(f);
    write_out(cout_path, neurons::coactivation_csv(rep));
    if (!fit_path.empty()) {
      int layers = 0;
      for (const auto& n : f.neurons) layers = std::max(layers, n.layer + 1);
      train::write_json(fit_path, neurons::to_json(neurons::powerlaw_fit(neurons::delta_by_depth(rep, layers))));
    }
  });
}

void add_ablate(CLI::App& app) {
  auto* ab = app.add_subcommand("ablate", "Causal ablation experiments");
  ab->require_subcommand(1);

  auto* run = ab->add_subcommand("run", "Targeted ablation, with or without retraining");
  static std::string mode = "no-retrain", mask_path, ckpt, data_path, seeds = "42", out, train_path, val_path, baseline;
  run->add_option("--mode", mode, "retrain or no-retrain");
  run->add_option("--mask", mask_path, "Mask file")->required();
  run->add_option("--ckpt", ckpt, "Probe checkpoint (no-retrain) or pre-trained checkpoint (retrain)")->required();
  run->add_option("--data", data_path, "Encoded evaluation examples")->required();
  run->add_option("--seeds", seeds, "Comma-separated seeds");
  run->add_option("--train", train_path, "Encoded training examples (retrain)");
  run->add_option("--val", val_path, "Encoded validation examples (retrain)");
  run->add_option("--baseline", baseline, "Unablated eval report per seed, as DIR/seed_S.json (retrain)");
  run->add_option("--out", out, "Run output (default stdout)");
  run->callback([] {
    const auto m = ablation::parse_mode(mode);
    const auto mask = model::load_mask(mask_path);
    const auto ck = load_ckpt(ckpt);
    const auto xs = load_data(data_path);
    const auto ss = parse_seeds(seeds);
    ablation::AblationRun r;
    if (m == ablation::AblationMode::NoRetrain) {
      r = ablation::ablate_noretrain({{ck.meta.seed, ck.params}}, mask, xs);
    } else {
      if (train_path.empty() || val_path.empty() || baseline.empty()) {
        throw ValidationError("retrain mode needs --train, --val and --baseline");
      }
      std::map<std::uint64_t, eval::F1Report> base;
      for (auto s : ss) {
        const auto p = fs::path(baseline) / ("seed_" + std::to_string(s) + ".json");
        if (fs::exists(p)) base[s] = eval::F1Report::from_json(train::read_json(p));
      }
      train::FinetuneHyper h;
      h.lr = 1e-3;
      h.batch_size = 32;
      r = ablation::ablate_retrain(ck.params, mask, load_data(train_path), load_data(val_path), xs, h, ss, base);
    }
    write_out(out, r.to_json().dump(2) + "\n");
  });

  auto* ctl = ab->add_subcommand("control", "Random control mask matching a target mask");
  static std::string target, cout_path;
  static int d_ff = 0;
  static std::uint64_t cseed = 42;
  ctl->add_option("--mask", target, "Target mask file")->required();
  ctl->add_option("--d-ff", d_ff, "Feed-forward width")->required();
  ctl->add_option("--seed", cseed, "Seed");
  ctl->add_option("--out", cout_path, "Mask output (default stdout)");
  ctl->callback([] { write_out(cout_path, model::format_mask(ablation::random_control_mask(model::load_mask(target), d_ff, cseed))); });

  auto* circ = ab->add_subcommand("circuit", "Component-level zero ablation and concentration ratio");
  static std::string ckpts, cdata, role, circ_out, json_out;
  circ->add_option("--ckpts", ckpts, "Directory of fine-tuned checkpoints, one per seed")->required();
  circ->add_option("--data", cdata, "Encoded evaluation examples")->required();
  circ->add_option("--role", role, "Role, e.g. ARG0-Agent")->required();
  circ->add_option("--out", circ_out, "Ranking CSV output (default stdout)");
  circ->add_option("--summary", json_out, "Summary JSON output");
  circ->callback([] {
    const auto r = data::parse_role(role);
    if (!r) {
      std::string valid;
      for (auto x : data::kAllRoles) valid += (valid.empty() ? "" : ", ") + std::string(data::role_name(x));
      throw ValidationError("unknown role '" + role + "' (valid: " + valid + ")");
    }
    const auto rep = ablation::circuit_analysis(load_ckpt_dir(ckpts), load_data(cdata), *r);
    write_out(circ_out, rep.to_csv());
    if (!json_out.empty()) train::write_json(json_out, rep.to_json());
  });
}

void add_report(CLI::App& app) {
  auto* rp = app.add_subcommand("report", "Tables and plot data from a run store");
  rp->require_subcommand(1);
  auto* t2 = rp->add_subcommand("table2", "Regime-by-scale F1 table with the E row");
  static std::string store, out;
  t2->add_option("--store", store, "Run store")->required();
  t2->add_option("--out", out, "CSV output (default stdout)");
  t2->callback([] {
    if (!fs::exists(fs::path(store) / "index.json")) throw MissingArtifactError("no index.json in " + store);
    const auto t = reports::emit_table2(reports::RunStore(store));
    for (const auto& w : t.warnings) std::cerr << "warning: " << w << '\n';
    write_out(out, t.csv);
  });
  auto* fig = rp->add_subcommand("figure", "Long-format plot data for one figure");
  static std::string id, fstore, fout;
  fig->add_option("--id", id, "fig2b, fig6, fig9, cka or pca")->required();
  fig->add_option("--store", fstore, "Run store")->required();
  fig->add_option("--out", fout, "Output directory")->required();
  fig->callback([] {
    if (!fs::exists(fs::path(fstore) / "index.json")) throw MissingArtifactError("no index.json in " + fstore);
    reports::write_plotdata(reports::RunStore(fstore), id, fout);
  });
}

void add_pipeline(CLI::App& app) {
  auto* pl = app.add_subcommand("pipeline", "End-to-end experiment with stage skipping");
  pl->require_subcommand(1);
  auto* run = pl->add_subcommand("run", "Run or resume an experiment");
  static std::string config_path, scale, store, seeds, dump;
  static bool desk = false;
  static int jobs = 0;
  static std::vector<std::string> sets;
  run->add_option("--config", config_path, "Experiment config file (JSON)");
  run->add_option("--scale", scale, "Scale preset");
  run->add_flag("--desk", desk, "Single-CPU budget on the synthetic corpus");
  run->add_option("--store", store, "Run store directory");
  run->add_option("--seeds", seeds, "Comma-separated seeds");
  run->add_option("--jobs", jobs, "Worker bound (runs are single-threaded)");
  run->add_option("--set", sets, "Override, e.g. --set finetune.max_epochs=10")->take_all();
  run->add_option("--print-config", dump, "Write the effective config here and exit");
  run->callback([] {
    auto c = pipeline::ExperimentConfig::from_preset(scale.empty() ? "tiny" : scale, desk);
    if (!config_path.empty()) {
      auto j = train::read_json(config_path);
      if (!scale.empty()) j["scale"] = scale;
      if (desk) j["desk"] = true;
      c = pipeline::apply_json(c, j);
    }
    if (!store.empty()) c.store = store;
    if (!seeds.empty()) c.seeds = parse_seeds(seeds);
    if (jobs > 0) c.jobs = jobs;
    for (const auto& s : sets) c = pipeline::apply_override(c, s);
    c.validate();
    if (!dump.empty()) {
      write_out(dump, pipeline::to_json(c).dump(2) + "\n");
      return;
    }
    const auto r = pipeline::run_pipeline(c, &std::cerr);
    std::cerr << "stages run: " << r.executed.size() << ", skipped: " << r.skipped.size() << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srlprobe: semantic-role emergence in small decoder-only transformers"};
  app.require_subcommand(1);
  add_data(app);
  add_train(app);
  add_eval(app);
  add_emerge(app);
  add_repsim(app);
  add_neurons(app);
  add_ablate(app);
  add_report(app);
  add_pipeline(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

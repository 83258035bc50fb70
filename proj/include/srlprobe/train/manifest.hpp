#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/checkpoint.hpp"
#include "srlprobe/model/config.hpp"
#include "srlprobe/train/pretrain.hpp"

namespace srlprobe::train {

using json = nlohmann::ordered_json;

inline json config_json(const model::ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model}, {"n_heads", c.n_heads}, {"ff_mult", c.ff_mult},
          {"vocab", c.vocab},       {"max_seq", c.max_seq}, {"dropout", c.dropout}, {"tie_embeddings", c.tie_embeddings}};
}

inline model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ff_mult = j.value("ff_mult", 4);
  c.vocab = j.at("vocab").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  c.dropout = j.value("dropout", 0.0f);
  c.tie_embeddings = j.value("tie_embeddings", true);
  c.validate();
  return c;
}

/// Record of one training run. Contains no timestamps or host details, so
/// identical inputs give identical files.
struct TrainManifest {
  std::string kind;  // "pretrain" or "finetune"
  model::ModelConfig config;
  std::string regime;
  std::uint64_t seed = 0;
  json hyper;
  json inputs;  // input fingerprints
  std::vector<EpochMetrics> epochs;
  std::vector<std::string> checkpoints;
  int best_epoch = 0;
  int stop_epoch = 0;
  bool early_stopped = false;

  json to_json() const {
    json j;
    j["kind"] = kind;
    j["config"] = config_json(config);
    j["regime"] = regime;
    j["seed"] = seed;
    j["hyper"] = hyper;
    j["inputs"] = inputs;
    json rows = json::array();
    for (const auto& e : epochs) {
      rows.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_metric", e.val_metric}, {"steps", e.steps}});
    }
    j["epochs"] = rows;
    j["checkpoints"] = checkpoints;
    j["best_epoch"] = best_epoch;
    j["stop_epoch"] = stop_epoch;
    j["early_stopped"] = early_stopped;
    return j;
  }

  static TrainManifest from_json(const json& j) {
    TrainManifest m;
    m.kind = j.at("kind").get<std::string>();
    m.config = config_from_json(j.at("config"));
    m.regime = j.at("regime").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.hyper = j.at("hyper");
    m.inputs = j.at("inputs");
    for (const auto& e : j.at("epochs")) {
      m.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_metric").get<double>(),
                          e.at("steps").get<std::int64_t>()});
    }
    m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.stop_epoch = j.at("stop_epoch").get<int>();
    m.early_stopped = j.at("early_stopped").get<bool>();
    return m;
  }

  /// Per-epoch metric table as CSV.
  std::string metrics_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_metric,steps\n" << std::setprecision(17);
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_metric << ',' << e.steps << '\n';
    return os.str();
  }
};

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.eprb", epoch);
  return buf;
}

/// Writes a run's checkpoints into one directory: `last.eprb` every epoch,
/// `best.eprb` on improvement and `epoch_NNN.eprb` every `keep_every` epochs.
class CheckpointSink {
 public:
  CheckpointSink(std::filesystem::path dir, int keep_every, model::CheckpointMeta base)
      : dir_(std::move(dir)), keep_every_(keep_every), base_(std::move(base)) {
    std::filesystem::create_directories(dir_);
  }

  void operator()(const EpochMetrics& m, const Params& p, bool is_best) {
    model::Checkpoint ck{p, base_};
    ck.meta.epoch = static_cast<std::uint32_t>(m.epoch);
    if (keep_every_ > 0 && m.epoch % keep_every_ == 0) write(ck, epoch_name(m.epoch));
    if (is_best) write(ck, "best.eprb");
    write(ck, "last.eprb");
  }

  /// Epoch-0 snapshot of the starting point.
  void initial(const Params& p) {
    model::Checkpoint ck{p, base_};
    ck.meta.epoch = 0;
    write(ck, epoch_name(0));
  }

  const std::vector<std::string>& written() const noexcept { return written_; }

 private:
  void write(const model::Checkpoint& ck, const std::string& name) {
    model::save_checkpoint(ck, (dir_ / name).string());
    if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
  }

  std::filesystem::path dir_;
  int keep_every_;
  model::CheckpointMeta base_;
  std::vector<std::string> written_;
};

}  // namespace srlprobe::train

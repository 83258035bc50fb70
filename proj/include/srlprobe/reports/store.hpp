#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/emergence/emergence.hpp"
#include "srlprobe/eval/span.hpp"
#include "srlprobe/model/config.hpp"
#include "srlprobe/train/manifest.hpp"

namespace srlprobe::reports {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct IndexKey {
  std::string experiment;  // pretrain, finetune, emergence, cka, probe, neurons, ablation, ...
  std::string scale;
  std::string regime;  // empty when not applicable
  std::uint64_t seed = 0;

  auto tie() const { return std::tie(experiment, scale, regime, seed); }
  friend bool operator<(const IndexKey& a, const IndexKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const IndexKey& a, const IndexKey& b) { return a.tie() == b.tie(); }
};

/// Directory of run artifacts plus `index.json`, which maps (experiment,
/// scale, regime, seed) to store-relative paths.
class RunStore {
 public:
  explicit RunStore(fs::path root) : root_(std::move(root)) {
    if (fs::exists(index_path())) load_index();
  }

  const fs::path& root() const noexcept { return root_; }
  fs::path index_path() const { return root_ / "index.json"; }
  fs::path resolve(const std::string& rel) const { return root_ / rel; }

  void put(const IndexKey& key, std::map<std::string, std::string> files) { entries_[key] = std::move(files); }

  const std::map<std::string, std::string>* find(const IndexKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::vector<IndexKey> keys(const std::string& experiment) const {
    std::vector<IndexKey> out;
    for (const auto& [k, v] : entries_) {
      if (k.experiment == experiment) out.push_back(k);
    }
    return out;
  }

  std::vector<std::string> scales() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) {
      if (std::find(out.begin(), out.end(), k.scale) == out.end()) out.push_back(k.scale);
    }
    return out;
  }

  /// Indexed paths that no longer exist.
  std::vector<std::string> dangling() const {
    std::vector<std::string> out;
    for (const auto& [k, files] : entries_) {
      for (const auto& [name, rel] : files) {
        if (!fs::exists(resolve(rel))) out.push_back(rel);
      }
    }
    return out;
  }

  ojson index_json() const {
    ojson rows = ojson::array();
    for (const auto& [k, files] : entries_) {
      ojson f = ojson::object();
      for (const auto& [name, rel] : files) f[name] = rel;
      rows.push_back({{"experiment", k.experiment}, {"scale", k.scale}, {"regime", k.regime}, {"seed", k.seed},
                      {"files", f}});
    }
    return {{"entries", rows}};
  }

  void save_index() const { train::write_json(index_path(), index_json()); }

 private:
  void load_index() {
    const auto j = train::read_json(index_path());
    try {
      for (const auto& e : j.at("entries")) {
        IndexKey k{e.at("experiment").get<std::string>(), e.at("scale").get<std::string>(),
                   e.at("regime").get<std::string>(), e.at("seed").get<std::uint64_t>()};
        std::map<std::string, std::string> files;
        for (const auto& [name, rel] : e.at("files").items()) files[name] = rel.get<std::string>();
        entries_[k] = std::move(files);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("index.json: " + std::string(e.what()));
    }
  }

  fs::path root_;
  std::map<IndexKey, std::map<std::string, std::string>> entries_;
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Test-set F1 of every (scale, regime, seed) present in the store.
inline std::map<std::string, std::map<std::string, std::map<std::uint64_t, eval::F1Report>>> regime_reports(
    const RunStore& store) {
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, eval::F1Report>>> out;
  for (const auto& k : store.keys("finetune")) {
    const auto* files = store.find(k);
    auto it = files->find("report");
    if (it == files->end() || !fs::exists(store.resolve(it->second))) continue;
    out[k.scale][k.regime][k.seed] = eval::F1Report::from_json(train::read_json(store.resolve(it->second)).at("test"));
  }
  return out;
}

struct Table2 {
  std::string csv;
  std::vector<std::string> warnings;
};

/// Rows random, frozen, full and E; one column per scale; cells mean±std
/// in percent (E as a fraction). Cells built from fewer seeds than the
/// scale's largest seed set carry a `(n=k)` flag; empty cells are absent.
inline Table2 emit_table2(const RunStore& store) {
  const auto reps = regime_reports(store);
  Table2 t;
  std::vector<std::string> scales;
  for (const auto& p : model::scale_presets()) {
    if (reps.count(p.name)) scales.push_back(p.name);
  }
  for (const auto& [s, v] : reps) {
    if (std::find(scales.begin(), scales.end(), s) == scales.end()) scales.push_back(s);
  }
  std::ostringstream os;
  os << "row";
  for (const auto& s : scales) os << ',' << s;
  os << '\n';
  auto cell = [&](const std::string& scale, const std::string& row, std::size_t expected) -> std::string {
    const auto& byreg = reps.at(scale);
    std::vector<double> xs;
    if (row == "E") {
      if (byreg.count("full") && byreg.count("frozen") && byreg.count("random")) {
        const auto& frozen = byreg.at("frozen");
        const auto& random = byreg.at("random");
        for (const auto& [seed, full] : byreg.at("full")) {
          auto fz = frozen.find(seed);
          auto rd = random.find(seed);
          if (fz == frozen.end() || rd == random.end()) continue;
          try {
            xs.push_back(emergence::emergence_score(fz->second.f1, rd->second.f1, full.f1));
          } catch (const UndefinedError&) {
            t.warnings.push_back(scale + " seed " + std::to_string(seed) + ": E undefined");
          }
        }
      }
    } else if (byreg.count(row)) {
      for (const auto& [seed, r] : byreg.at(row)) xs.push_back(r.f1);
    }
    if (xs.empty()) {
      t.warnings.push_back(scale + " " + row + ": missing");
      return "";
    }
    std::string c;
    if (xs.size() == 1) {
      c = row == "E" ? fmt(xs[0]) : emergence::format_mean_std({xs[0], 0.0, 1}, 1, 100.0);
    } else {
      const auto m = emergence::aggregate_seeds(xs);
      c = row == "E" ? emergence::format_mean_std(m, 2) : emergence::format_mean_std(m, 1, 100.0);
    }
    if (xs.size() < expected) {
      c += " (n=" + std::to_string(xs.size()) + ")";
      t.warnings.push_back(scale + " " + row + ": " + std::to_string(xs.size()) + " of " + std::to_string(expected) +
                           " seeds");
    }
    return c;
  };
  for (const char* row : {"random", "frozen", "full", "E"}) {
    os << row;
    for (const auto& s : scales) {
      std::size_t expected = 0;
      for (const auto& [reg, seeds] : reps.at(s)) expected = std::max(expected, seeds.size());
      os << ',' << cell(s, row, expected);
    }
    os << '\n';
  }
  t.csv = os.str();
  return t;
}

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig2b", "fig6", "fig9", "cka", "pca"};
  return ids;
}

/// Concatenates the per-seed CSVs of `experiment` under an extra seed
/// column, keyed by the index entry's `file_key`.
inline std::string concat_seed_csv(const RunStore& store, const std::string& experiment, const std::string& file_key) {
  std::ostringstream os;
  bool header = false;
  for (const auto& k : store.keys(experiment)) {
    const auto* files = store.find(k);
    auto it = files->find(file_key);
    if (it == files->end()) continue;
    std::ifstream in(store.resolve(it->second));
    if (!in) throw MissingArtifactError("missing " + it->second);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        if (!header) os << "scale,seed," << line << '\n';
        header = true;
        continue;
      }
      if (!line.empty()) os << k.scale << ',' << k.seed << ',' << line << '\n';
    }
  }
  if (!header) throw MissingArtifactError("no " + experiment + " results in the store");
  return os.str();
}

/// Long-format plot tables of one figure: file name → contents.
inline std::map<std::string, std::string> emit_plotdata(const RunStore& store, const std::string& id) {
  std::map<std::string, std::string> out;
  if (id == "fig2b") {
    out["fig2b.csv"] = concat_seed_csv(store, "probe", "layers");
  } else if (id == "fig9") {
    out["fig9.csv"] = concat_seed_csv(store, "probe", "pretrain_series");
  } else if (id == "cka") {
    out["cka.csv"] = concat_seed_csv(store, "cka", "series");
  } else if (id == "pca") {
    out["pca.csv"] = concat_seed_csv(store, "neurons", "pca");
  } else if (id == "fig6") {
    out["fig6.csv"] = concat_seed_csv(store, "neurons", "coactivation");
    ojson fits = ojson::array();
    std::ostringstream curve;
    curve << "scale,seed,depth_fraction,fitted_delta_rho\n";
    for (const auto& k : store.keys("neurons")) {
      const auto* files = store.find(k);
      auto it = files->find("powerlaw");
      if (it == files->end()) continue;
      auto j = train::read_json(store.resolve(it->second));
      j["scale"] = k.scale;
      j["seed"] = k.seed;
      if (j.contains("alpha")) {
        const double a = j["alpha"].get<double>(), b = j["beta"].get<double>();
        for (int i = 1; i <= 20; ++i) {
          const double x = i / 20.0;
          curve << k.scale << ',' << k.seed << ',' << fmt(x) << ',' << fmt(a * std::pow(x, b)) << '\n';
        }
      }
      fits.push_back(j);
    }
    out["fig6_fit.json"] = fits.dump(2) + "\n";
    out["fig6_curve.csv"] = curve.str();
  } else {
    std::string valid;
    for (const auto& f : figure_ids()) valid += (valid.empty() ? "" : ", ") + f;
    throw ValidationError("unknown figure id '" + id + "' (valid: " + valid + ")");
  }
  return out;
}

inline void write_plotdata(const RunStore& store, const std::string& id, const fs::path& dir) {
  for (const auto& [name, text] : emit_plotdata(store, id)) train::write_text_atomic(dir / name, text);
}

}  // namespace srlprobe::reports

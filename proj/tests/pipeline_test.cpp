#include <gtest/gtest.h>

#include <filesystem>

#include "srlprobe/pipeline/pipeline.hpp"
#include "srlprobe/reports/store.hpp"

namespace srlprobe::pipeline {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("srlprobe_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(const fs::path& store) {
  auto c = ExperimentConfig::from_preset("tiny", true);
  c.store = store.string();
  c.seeds = {1, 2};
  for (const char* s : {"data.n_qa=200", "data.n_docs=200", "model.d_model=16", "pretrain.max_epochs=1",
                        "pretrain.warmup_steps=5", "finetune.max_epochs=2", "probe.max_epochs=2", "cka_examples=40"}) {
    c = apply_override(c, s);
  }
  return c;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, InvalidPresetNamesValidOnes) {
  auto msg = message_of([] { ExperimentConfig::from_preset("huge", false); });
  EXPECT_NE(msg.find("tiny"), std::string::npos);
  EXPECT_NE(msg.find("medium"), std::string::npos);
}

TEST(Config, ValidationListsEveryProblem) {
  auto c = ExperimentConfig::from_preset("tiny", true);
  c.seeds.clear();
  c.jobs = 0;
  c.ablation_role = "ARG9";
  c.finetune.full_lr = -1;
  EXPECT_GE(c.problems().size(), 4u);
  auto msg = message_of([&] { c.validate(); });
  for (const char* part : {"seeds", "jobs", "ARG9", "lr"}) EXPECT_NE(msg.find(part), std::string::npos) << part;
}

TEST(Config, JsonAndOverrides) {
  auto c = ExperimentConfig::from_preset("tiny", true);
  auto d = apply_json(c, to_json(c));
  EXPECT_EQ(to_json(d).dump(), to_json(c).dump());
  d = apply_override(d, "finetune.max_epochs=7");
  EXPECT_EQ(d.finetune.max_epochs, 7);
  auto msg = message_of([&] { apply_json(c, nlohmann::json{{"bogus", 1}, {"model", {{"colour", 2}}}}); });
  EXPECT_NE(msg.find("bogus"), std::string::npos);
  EXPECT_NE(msg.find("colour"), std::string::npos);
  EXPECT_THROW(apply_override(c, "model.d_model=wide"), ValidationError);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ValidationError);
}

TEST(Pipeline, EndToEndRerunAndResume) {
  const auto store = fresh_dir("e2e");
  const auto c = small_config(store);
  auto first = run_pipeline(c, nullptr);
  EXPECT_TRUE(first.skipped.empty());
  EXPECT_EQ(first.executed.front(), "data");
  EXPECT_EQ(first.executed.back(), "report");

  auto again = run_pipeline(c, nullptr);
  EXPECT_TRUE(again.executed.empty());
  EXPECT_EQ(again.skipped.size(), first.executed.size());

  const auto root = store / "tiny-desk";
  fs::remove(root / "finetune" / "frozen" / "seed_2" / "report.json");
  auto resumed = run_pipeline(c, nullptr);
  EXPECT_NE(std::find(resumed.executed.begin(), resumed.executed.end(), "finetune/frozen/seed_2"),
            resumed.executed.end());
  EXPECT_NE(std::find(resumed.skipped.begin(), resumed.skipped.end(), "pretrain/seed_2"), resumed.skipped.end());

  auto changed = apply_override(c, "finetune.max_epochs=1");
  auto r = run_pipeline(changed, nullptr);
  EXPECT_NE(std::find(r.skipped.begin(), r.skipped.end(), "pretrain/seed_1"), r.skipped.end());
  EXPECT_NE(std::find(r.executed.begin(), r.executed.end(), "finetune/full/seed_1"), r.executed.end());

  reports::RunStore rs(store);
  EXPECT_TRUE(rs.dangling().empty());
  const auto t = reports::emit_table2(rs);
  EXPECT_EQ(t.csv.substr(0, t.csv.find('\n')), "row,tiny");
  EXPECT_NE(t.csv.find("\nE,"), std::string::npos);
  EXPECT_TRUE(t.warnings.empty());
  for (const auto& id : reports::figure_ids()) EXPECT_FALSE(reports::emit_plotdata(rs, id).empty()) << id;
  fs::remove_all(store);
}

TEST(Pipeline, FreshRunsWriteIdenticalManifests) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  auto ca = small_config(a), cb = small_config(b);
  ca.seeds = cb.seeds = {3};
  run_pipeline(ca, nullptr);
  run_pipeline(cb, nullptr);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    const auto name = e.path().filename().string();
    if (name != "manifest.json" && name != "stage.json") continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10);
  fs::remove_all(a);
  fs::remove_all(b);
}

void put_report(reports::RunStore& s, const std::string& regime, std::uint64_t seed, double f1) {
  const std::string rel = regime + "_" + std::to_string(seed) + ".json";
  eval::F1Report r;
  r.f1 = f1;
  train::write_json(s.resolve(rel), reports::ojson{{"test", r.to_json()}});
  s.put({"finetune", "tiny", regime, seed}, {{"report", rel}});
}

TEST(Reports, Table2CellsAndMissingSeed) {
  const auto dir = fresh_dir("table2");
  fs::create_directories(dir);
  reports::RunStore s(dir);
  const double f1[3][3] = {{0.30, 0.40, 0.50}, {0.32, 0.42, 0.56}, {0.28, 0.41, 0.60}};
  for (int k = 0; k < 3; ++k) {
    put_report(s, "random", k, f1[k][0]);
    put_report(s, "frozen", k, f1[k][1]);
    if (k < 2) put_report(s, "full", k, f1[k][2]);
  }
  s.save_index();
  const auto t = reports::emit_table2(reports::RunStore(dir));
  std::istringstream lines(t.csv);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[1], "random,30.0±2.0");
  EXPECT_EQ(rows[2], "frozen,41.0±1.0");
  EXPECT_EQ(rows[3], "full,53.0±4.2 (n=2)");
  // Per-seed E: (0.4-0.3)/(0.5-0.3) = 0.5 and (0.42-0.32)/(0.56-0.32) = 0.41667.
  EXPECT_EQ(rows[4], "E,0.46±0.06 (n=2)");
  EXPECT_EQ(t.warnings.size(), 2u);
  fs::remove_all(dir);
}

TEST(Reports, UnknownFigureAndEmptyStore) {
  const auto dir = fresh_dir("figs");
  reports::RunStore s(dir);
  auto msg = message_of([&] { reports::emit_plotdata(s, "fig7"); });
  EXPECT_NE(msg.find("fig2b"), std::string::npos);
  EXPECT_THROW(reports::emit_plotdata(s, "cka"), MissingArtifactError);
}

}  // namespace
}  // namespace srlprobe::pipeline

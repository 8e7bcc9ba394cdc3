#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "skybeam/pipeline/experiment.hpp"

using namespace skybeam;
using namespace skybeam::pipeline;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skybeam_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig smoke() { return load_config(fs::path(SKYBEAM_SOURCE_DIR) / "configs" / "smoke.json"); }

std::string field_of(const json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

const Logger quiet{true};

json strip_timestamp(json j) {
  j.erase("generated_at");
  return j;
}

}  // namespace

TEST(Config, PredictorDefaults) {
  const ExperimentConfig c;
  for (const auto& p : c.predictors) {
    EXPECT_EQ(p.batch, 32);
    EXPECT_DOUBLE_EQ(p.lr, 1e-2);
    EXPECT_EQ(p.decay_epochs, (std::vector<int>{20, 40, 80}));
    EXPECT_DOUBLE_EQ(p.decay_factor, 0.1);
    EXPECT_EQ(p.epochs, 100);
    EXPECT_EQ(p.hidden.size(), 2u);
  }
  EXPECT_DOUBLE_EQ(c.resnet_lr, 1e-4);
  EXPECT_EQ(c.resnet_epochs, 20);
  EXPECT_EQ(c.resnet_decay_epochs, (std::vector<int>{4, 8, 12}));
  EXPECT_DOUBLE_EQ(c.split_ratio, 0.7);
  EXPECT_EQ(c.r, 8);
  EXPECT_EQ(c.r_prime, 3);
}

TEST(Config, TrackerDefaults) {
  const ExperimentConfig c;
  const int dims[] = {20, 2, 2};
  const double lrs[] = {1e-3, 1e-2, 1e-2};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto t = resolved_tracker(c, i);
    EXPECT_EQ(t.window, 8);
    EXPECT_EQ(t.input_dim, dims[i]);
    EXPECT_EQ(t.hidden, 128);
    EXPECT_EQ(t.layers, 2);
    EXPECT_EQ(t.classes, 32);
    EXPECT_DOUBLE_EQ(t.dropout, 0.5);
    EXPECT_DOUBLE_EQ(t.lr, lrs[i]);
    EXPECT_EQ(t.decay_epochs, (std::vector<int>{40, 120}));
    EXPECT_DOUBLE_EQ(t.decay_factor, 0.1);
    EXPECT_EQ(t.batch, 512);
    EXPECT_EQ(t.epochs, 200);
  }
}

TEST(Config, ShippedDefaultFileEqualsBuiltInDefaults) {
  const auto c = load_config(fs::path(SKYBEAM_SOURCE_DIR) / "configs" / "default.json");
  EXPECT_EQ(c.hash(), ExperimentConfig{}.hash());
}

TEST(Config, JsonRoundTrip) {
  const auto c = smoke();
  EXPECT_EQ(ExperimentConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of({{"dataset", {{"split_ratio", 1.5}}}}), "dataset.split_ratio");
  EXPECT_EQ(field_of({{"dataset", {{"r_prime", 2}}}}), "dataset.r_prime");
  EXPECT_EQ(field_of({{"dataset", {{"splt", 1}}}}), "dataset.splt");
  EXPECT_EQ(field_of({{"predictors", {{"vision", {{"lr", "fast"}}}}}}), "predictors.vision.lr");
  EXPECT_EQ(field_of({{"predictors", {{"position", {{"hidden", json::array()}}}}}}), "predictors.position");
  EXPECT_EQ(field_of({{"trackers", {{"vision", {{"input_dim", 20}}}}}}), "trackers.vision");
  EXPECT_EQ(field_of({{"eval", {{"k", {0}}}}}), "eval.k");
  EXPECT_EQ(field_of({{"eval", {{"strata", {"altitude"}}}}}), "eval.strata");
  EXPECT_EQ(field_of({{"eval", {{"rollout", {{"schedules", {{{"name", "late"}, {"gt_steps", {"9-20"}}}}}}}}}}),
            "eval.rollout.schedules[0].gt_steps");
  EXPECT_EQ(field_of({{"scenario", {{"num_flights", 0}}}}).rfind("scenario", 0), 0u);
  EXPECT_EQ(field_of({{"bogus", 1}}), "bogus");
  EXPECT_EQ(field_of(json::object()), "<accepted>");
}

TEST(Config, HashIgnoresOutputDirButNotSeeds) {
  ExperimentConfig a, b;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.trackers[2].seed = 99;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, SeedOverrideReachesEverySeed) {
  ExperimentConfig c;
  c.override_seeds(42);
  const json s = c.seeds();
  std::vector<std::uint64_t> found;
  std::function<void(const json&)> walk = [&](const json& j) {
    if (j.is_object())
      for (const auto& [k, v] : j.items()) walk(v);
    else
      found.push_back(j.get<std::uint64_t>());
  };
  walk(s);
  EXPECT_EQ(found.size(), 3u + 3u + 6u);
  for (auto v : found) EXPECT_EQ(v, 42u);
}

TEST(Pipeline, DefaultCorpusSplitCounts) {
  const auto dir = fresh_dir("counts");
  ExperimentConfig c;
  const json m = run_generate(c, RunPaths{dir}, quiet);
  EXPECT_EQ(m["counts"]["samples"], 12005);
  EXPECT_EQ(m["split"]["prediction"]["train"], 8403);
  EXPECT_EQ(m["split"]["prediction"]["test"], 3602);
  EXPECT_EQ(m["config_hash"], c.hash());
  fs::remove_all(dir);
}

TEST(Pipeline, AllWritesEveryArtifact) {
  const auto dir = fresh_dir("all");
  const auto c = smoke();
  const RunPaths out{dir};
  run_all(c, out, quiet);
  int checkpoints = 0;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
    if (e.path().extension() != ".json") continue;
    ++checkpoints;
    const json m = eval::read_json(e.path(), "train");
    EXPECT_EQ(m["config_hash"], c.hash());
    EXPECT_TRUE(m.contains("normalization"));
    EXPECT_TRUE(fs::exists(dir / "checkpoints" / m["params"]["file"].get<std::string>()));
  }
  EXPECT_EQ(checkpoints, 6);
  for (const auto& name : {"eval.json", "eval.txt", "rollout.json", "rollout_curves.csv", "summary.json", "summary.txt",
                           "confusion_predictor_vision.csv", "rollout_beam_only_intermittent.csv", "rollout_vision.csv"})
    EXPECT_TRUE(fs::exists(out.reports() / name)) << name;

  const json summary = eval::read_json(out.summary_json(), "report");
  EXPECT_EQ(summary["config_hash"], c.hash());
  EXPECT_TRUE(summary["consistency_violations"].empty());
  const json& tr = summary["tradeoff"];
  ASSERT_EQ(tr.size(), 4u);
  EXPECT_EQ(tr[0]["beam_training_percent"], 100.0);
  EXPECT_EQ(tr[1]["beam_training_percent"], 48.0);
  EXPECT_EQ(tr[2]["beam_training_percent"], 16.0);
  EXPECT_EQ(tr[3]["approach"], "vision");
  EXPECT_EQ(tr[3]["beam_training_percent"], 0.0);

  // rollout csv: one header plus 50 rows per segment, provenance is one char per window entry
  std::ifstream is(out.reports() / "rollout_beam_only_initial_only.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,true_beam,pred_top1,pred_top2,pred_top3,input_provenance");
  long rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1).size(), 8u);
  }
  EXPECT_EQ(rows, 50 * summary["rollout"]["segments"].get<long>());
  fs::remove_all(dir);
}

TEST(Pipeline, SameConfigTwiceGivesIdenticalSummary) {
  const auto d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
  auto c = smoke();
  run_all(c, RunPaths{d1}, quiet);
  run_all(c, RunPaths{d2}, quiet);
  EXPECT_EQ(strip_timestamp(eval::read_json(d1 / "reports" / "summary.json", "")),
            strip_timestamp(eval::read_json(d2 / "reports" / "summary.json", "")));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Pipeline, MissingUpstreamNamesTheSubcommand) {
  const auto dir = fresh_dir("missing");
  const auto c = smoke();
  try {
    run_train(c, RunPaths{dir}, quiet);
    FAIL() << "expected a dependency error";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("generate"), std::string::npos);
  }
  run_generate(c, RunPaths{dir}, quiet);
  try {
    run_evaluate(c, RunPaths{dir}, quiet);
    FAIL() << "expected a dependency error";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("run `train` first"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Pipeline, ReportRefusesMismatchedHashes) {
  const auto dir = fresh_dir("mismatch");
  const auto c = smoke();
  const RunPaths out{dir};
  run_all(c, out, quiet);

  json ev = eval::read_json(out.eval_json(), "evaluate");
  const json original = ev;
  ev["config_hash"] = "0000000000000000";
  eval::write_json(out.eval_json(), ev);
  try {
    run_report(c, out, quiet);
    FAIL() << "expected a dependency error";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("evaluate"), std::string::npos);
  }
  eval::write_json(out.eval_json(), original);
  EXPECT_NO_THROW(run_report(c, out, quiet));

  // a different config sees every artifact as stale
  auto other = c;
  other.override_seeds(5);
  EXPECT_THROW(run_report(other, out, quiet), DependencyError);
  fs::remove_all(dir);
}

TEST(Pipeline, EditedDatasetIsDetected) {
  const auto dir = fresh_dir("edited");
  const auto c = smoke();
  const RunPaths out{dir};
  run_generate(c, out, quiet);
  std::ofstream(out.samples_csv(), std::ios::app) << "\n";
  EXPECT_THROW(prepare_data(c, out), DependencyError);
  fs::remove_all(dir);
}

TEST(Pipeline, TrackingSplitKeepsFlightsApart) {
  const auto dir = fresh_dir("flights");
  const auto c = smoke();
  run_generate(c, RunPaths{dir}, quiet);
  const auto d = prepare_data(c, RunPaths{dir});
  std::set<int> train, test;
  for (const auto& s : d.seq_train) train.insert(s.flight_id);
  for (const auto& s : d.seq_test) test.insert(s.flight_id);
  for (int f : test) EXPECT_EQ(train.count(f), 0u);
  EXPECT_EQ(d.pred_train.size() + d.pred_test.size(), d.samples.size());
  fs::remove_all(dir);
}

TEST(Rollout, ScheduleWindows) {
  const auto s = track::parse_schedule({"1-8", "13-20", "33-40"});
  const auto w = schedule_windows(s, true);
  const std::vector<std::pair<int, int>> expected{{1, 8}, {9, 12}, {13, 20}, {21, 32}, {33, 40}, {41, 50}};
  EXPECT_EQ(w, expected);
  EXPECT_EQ(schedule_windows(s, false), (std::vector<std::pair<int, int>>{{1, 50}}));
  EXPECT_EQ(schedule_windows(track::full_schedule(), true), (std::vector<std::pair<int, int>>{{1, 50}}));
}
